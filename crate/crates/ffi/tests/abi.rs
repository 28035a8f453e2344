use std::ffi::{CStr, CString};
use std::ptr;

use ggm_core::reverse::{sample_many, Prompt, SamplerConfig};
use ggm_core::classifier::ExactOracle;
use ggm_core::{JointDistribution, NoiseDistribution, NoiseSequence, RngStream, ScanSchedule};
use ggm_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::os::raw::c_char; 256];
    unsafe {
        ggm_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn random_instance(len: usize, vocab: usize, seed: u64) -> *mut GgmInstance {
    let mut inst = ptr::null_mut();
    assert_eq!(unsafe { ggm_instance_random(len, vocab, seed, &mut inst) }, GgmStatus::Ok);
    inst
}

#[test]
fn instance_round_trip_and_tv() {
    let inst = random_instance(3, 2, 4);
    let mut n = 0;
    unsafe {
        assert_eq!(ggm_instance_num_states(inst, &mut n), GgmStatus::Ok);
        assert_eq!(n, 8);
        let mut probs = vec![0.0; 8];
        assert_eq!(ggm_instance_probs(inst, probs.as_mut_ptr(), probs.len()), GgmStatus::Ok);
        assert_eq!(probs, JointDistribution::random(3, 2, 4).unwrap().probs());
        assert_eq!(ggm_instance_probs(inst, probs.as_mut_ptr(), 3), GgmStatus::BufferTooSmall);

        let json = CString::new(JointDistribution::random(3, 2, 4).unwrap().to_json().unwrap()).unwrap();
        let mut parsed = ptr::null_mut();
        assert_eq!(ggm_instance_from_json(json.as_ptr(), &mut parsed), GgmStatus::Ok);
        let mut tv = 1.0;
        assert_eq!(ggm_instance_tv(inst, parsed, &mut tv), GgmStatus::Ok);
        assert_eq!(tv, 0.0);
        ggm_instance_free(parsed);
        ggm_instance_free(inst);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        assert_eq!(ggm_instance_num_states(ptr::null(), ptr::null_mut()), GgmStatus::NullPointer);
        assert!(!last_error().is_empty());
        let bad = CString::new("{not json").unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(ggm_instance_from_json(bad.as_ptr(), &mut out), GgmStatus::Parse);
        assert!(out.is_null());
        let mut steps = 0;
        assert_eq!(ggm_theorem1_min_steps(4, 0.5, 0.25, &mut steps), GgmStatus::Ok);
        assert_eq!(steps, 16);
        assert_ne!(ggm_theorem1_min_steps(4, 1.5, 0.25, &mut steps), GgmStatus::Ok);
        let mut bound = 0.0;
        assert_eq!(ggm_lemma1_bound(3, 0.5, 6, &mut bound), GgmStatus::Ok);
        assert!((bound - 0.75).abs() < 1e-15);
        // freeing null is a no-op
        ggm_instance_free(ptr::null_mut());
        ggm_sampler_free(ptr::null_mut());
        assert!(!CStr::from_ptr(ggm_version()).to_bytes().is_empty());
    }
}

#[test]
fn oracle_sampler_matches_the_library() {
    let inst = random_instance(3, 3, 7);
    let mut sampler = ptr::null_mut();
    unsafe {
        assert_eq!(ggm_sampler_new_oracle(inst, 9, 0.5, 11, &mut sampler), GgmStatus::Ok);
        let mut tokens = [0u32; 3];
        let mut ours = Vec::new();
        for _ in 0..25 {
            assert_eq!(ggm_sampler_sample(sampler, tokens.as_mut_ptr(), 3), GgmStatus::Ok);
            ours.push(tokens.to_vec());
        }
        let mut tv = 1.0;
        assert_eq!(ggm_sampler_certify(sampler, ptr::null(), 0.05, &mut tv), GgmStatus::Ok);
        assert!(tv <= 0.05);
        assert_eq!(ggm_sampler_certify(sampler, ptr::null(), 0.0, &mut tv), GgmStatus::CertificationFailed);

        let positions = [2usize];
        let values = [1u32];
        for _ in 0..20 {
            assert_eq!(ggm_sampler_infill(sampler, positions.as_ptr(), values.as_ptr(), 1, tokens.as_mut_ptr(), 3), GgmStatus::Ok);
            assert_eq!(tokens[2], 1);
        }
        assert_eq!(ggm_sampler_configure(sampler, 0.0, 1.0), GgmStatus::InvalidConfig);
        assert_eq!(ggm_sampler_configure(sampler, 0.9, 0.7), GgmStatus::Ok);
        assert_eq!(ggm_sampler_sample(sampler, tokens.as_mut_ptr(), 1), GgmStatus::BufferTooSmall);
        ggm_sampler_free(sampler);
        ggm_instance_free(inst);

        let p = JointDistribution::random(3, 3, 7).unwrap();
        let schedule = ScanSchedule::identity(3, 9).unwrap();
        let noise = NoiseSequence::constant(NoiseDistribution::uniform(3, 0.5).unwrap());
        let oracle = ExactOracle::new(&p, &schedule, &noise).unwrap();
        let lib = sample_many(&oracle, &schedule, &noise, &SamplerConfig::default(), &Prompt::empty(), &RngStream::new(11), 25).unwrap();
        let lib: Vec<Vec<u32>> = lib.iter().map(|x| x.as_slice().to_vec()).collect();
        assert_eq!(ours, lib);
    }
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ggm.h")).unwrap();
    for name in [
        "ggm_instance_from_json",
        "ggm_instance_random",
        "ggm_sampler_new_oracle",
        "ggm_sampler_new_model",
        "ggm_sampler_sample",
        "ggm_sampler_infill",
        "ggm_sampler_certify",
        "ggm_theorem1_min_steps",
        "ggm_lemma1_bound",
        "ggm_last_error_message",
        "typedef struct GgmSampler GgmSampler",
        "GGM_STATUS_CERTIFICATION_FAILED = 11",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
