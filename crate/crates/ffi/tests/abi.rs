use std::ffi::{CStr, CString};
use std::ptr;

use lc_protonets::cli_io::save_manifest;
use lc_protonets::prototypes::{build_store, classify, DEFAULT_TIE_EPSILON};
use lc_protonets::synthgen::{generate, SynthConfig};
use lcpn_ffi::*;

fn last_error() -> String {
    let p = lcpn_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Support {
    emb: Vec<f64>,
    offsets: Vec<usize>,
    labels: Vec<usize>,
}

fn plane_support() -> Support {
    Support {
        emb: vec![1.0, 0.0, 0.7, 0.7, 0.0, 1.0],
        offsets: vec![0, 1, 3, 4],
        labels: vec![0, 0, 1, 1],
    }
}

unsafe fn build(s: &Support, dim: usize) -> (LcpnStatus, *mut LcpnStore) {
    let mut store = ptr::null_mut();
    let n = s.offsets.len() - 1;
    let st = lcpn_store_build(s.emb.as_ptr(), n, dim, s.offsets.as_ptr(), s.labels.as_ptr(), &mut store);
    (st, store)
}

#[test]
fn build_classify_and_inspect() {
    unsafe {
        let (st, store) = build(&plane_support(), 2);
        assert_eq!(st, LcpnStatus::Ok);
        let mut n = 0;
        assert_eq!(lcpn_store_len(store, &mut n), LcpnStatus::Ok);
        assert_eq!(n, 3);
        let mut dim = 0;
        assert_eq!(lcpn_store_dim(store, &mut dim), LcpnStatus::Ok);
        assert_eq!(dim, 2);

        let mut buf = [0usize; 4];
        let mut len = 0;
        assert_eq!(lcpn_store_class(store, 2, buf.as_mut_ptr(), 4, &mut len), LcpnStatus::Ok);
        assert_eq!(&buf[..len], &[0, 1]);
        assert_eq!(lcpn_store_class(store, 3, buf.as_mut_ptr(), 4, &mut len), LcpnStatus::OutOfRange);

        let q = [0.6, 0.8];
        assert_eq!(lcpn_classify(store, q.as_ptr(), 2, LCPN_DEFAULT_TIE_EPSILON, buf.as_mut_ptr(), 4, &mut len), LcpnStatus::Ok);
        assert_eq!(&buf[..len], &[0, 1]);

        assert_eq!(lcpn_classify(store, q.as_ptr(), 2, LCPN_DEFAULT_TIE_EPSILON, buf.as_mut_ptr(), 1, &mut len), LcpnStatus::BufferTooSmall);
        assert_eq!(len, 2);

        let mut deduped = ptr::null_mut();
        assert_eq!(lcpn_store_dedup(store, &mut deduped), LcpnStatus::Ok);
        assert_eq!(lcpn_store_len(deduped, &mut n), LcpnStatus::Ok);
        assert!(n <= 3);
        lcpn_store_free(deduped);
        lcpn_store_free(store);
        lcpn_store_free(ptr::null_mut());
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut out = 0.0;
        let u = [1.0, 0.0];
        let z = [0.0, 0.0];
        assert_eq!(lcpn_cosine_distance(u.as_ptr(), u.as_ptr(), 2, &mut out), LcpnStatus::Ok);
        assert_eq!(out, 0.0);
        assert_eq!(lcpn_cosine_distance(u.as_ptr(), z.as_ptr(), 2, &mut out), LcpnStatus::ZeroNorm);
        assert!(!last_error().is_empty());
        assert_eq!(lcpn_cosine_distance(ptr::null(), u.as_ptr(), 2, &mut out), LcpnStatus::NullPointer);
        assert!(last_error().contains("null"));

        let (st, store) = build(&plane_support(), 2);
        assert_eq!(st, LcpnStatus::Ok);
        let q = [1.0, 0.0, 0.0];
        let mut buf = [0usize; 4];
        let mut len = 0;
        assert_eq!(lcpn_classify(store, q.as_ptr(), 3, 1e-9, buf.as_mut_ptr(), 4, &mut len), LcpnStatus::DimensionMismatch);
        assert_eq!(lcpn_classify(store, q.as_ptr(), 2, f64::NAN, buf.as_mut_ptr(), 4, &mut len), LcpnStatus::InvalidArgument);
        lcpn_store_free(store);

        let mut bad = plane_support();
        bad.offsets = vec![0, 2, 1, 4];
        assert_eq!(build(&bad, 2).0, LcpnStatus::InvalidArgument);
        assert_eq!(build(&plane_support(), 0).0, LcpnStatus::InvalidArgument);

        let wide = Support {
            emb: vec![1.0],
            offsets: vec![0, 21],
            labels: (0..21).collect(),
        };
        assert_eq!(build(&wide, 1).0, LcpnStatus::CardinalityAboveCap);
    }
}

#[test]
fn errors_are_thread_local() {
    unsafe {
        let u = [1.0];
        let mut out = 0.0;
        assert_eq!(lcpn_cosine_distance(ptr::null(), u.as_ptr(), 1, &mut out), LcpnStatus::NullPointer);
    }
    let other = std::thread::spawn(|| lcpn_last_error_message().is_null()).join().unwrap();
    assert!(other);
}

#[test]
fn dataset_round_trip_matches_core() {
    let data = generate(&SynthConfig::default()).unwrap().dataset;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    save_manifest(&data, &path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(lcpn_dataset_load(cpath.as_ptr(), &mut ds), LcpnStatus::Ok);
        let (mut n, mut dim, mut labels) = (0, 0, 0);
        lcpn_dataset_len(ds, &mut n);
        lcpn_dataset_dim(ds, &mut dim);
        lcpn_dataset_label_count(ds, &mut labels);
        assert_eq!((n, dim, labels), (data.len(), data.dim(), 10));
        assert_eq!(CStr::from_ptr(lcpn_dataset_label_name(ds, 3)).to_str().unwrap(), "tag03");
        assert!(lcpn_dataset_label_name(ds, 10).is_null());

        let mut emb = vec![0.0; dim];
        assert_eq!(lcpn_dataset_item_embedding(ds, 5, emb.as_mut_ptr(), dim), LcpnStatus::Ok);
        assert_eq!(emb, data.items()[5].embedding);
        assert_eq!(lcpn_dataset_item_embedding(ds, 5, emb.as_mut_ptr(), dim - 1), LcpnStatus::BufferTooSmall);
        let mut lbuf = [0usize; 8];
        let mut len = 0;
        assert_eq!(lcpn_dataset_item_labels(ds, 5, lbuf.as_mut_ptr(), 8, &mut len), LcpnStatus::Ok);
        assert_eq!(lbuf[..len].to_vec(), data.items()[5].labels.to_vec());

        let picks: Vec<usize> = (0..data.len()).step_by(13).collect();
        let mut store = ptr::null_mut();
        assert_eq!(lcpn_dataset_build_store(ds, picks.as_ptr(), picks.len(), &mut store), LcpnStatus::Ok);
        let support: Vec<_> = picks.iter().map(|&i| data.items()[i].clone()).collect();
        let reference = build_store(&support).unwrap();
        for q in data.items().iter().step_by(7) {
            assert_eq!(lcpn_classify(store, q.embedding.as_ptr(), dim, DEFAULT_TIE_EPSILON, lbuf.as_mut_ptr(), 8, &mut len), LcpnStatus::Ok);
            assert_eq!(lbuf[..len].to_vec(), classify(&q.embedding, &reference, DEFAULT_TIE_EPSILON).unwrap().to_vec());
        }
        let bad = [data.len()];
        let mut s2 = ptr::null_mut();
        assert_eq!(lcpn_dataset_build_store(ds, bad.as_ptr(), 1, &mut s2), LcpnStatus::OutOfRange);
        lcpn_store_free(store);
        lcpn_dataset_free(ds);

        let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
        assert_eq!(lcpn_dataset_load(missing.as_ptr(), &mut ds), LcpnStatus::Io);
        std::fs::write(&path, "{}\n").unwrap();
        assert_eq!(lcpn_dataset_load(cpath.as_ptr(), &mut ds), LcpnStatus::Parse);
        assert!(last_error().contains(":1:"));
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(lcpn_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
