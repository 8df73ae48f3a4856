use proptest::prelude::*;
use synmem_core::matrix::SynapseMatrix;
use synmem_core::rng::seeded;
use synmem_core::store::container::{decode, encode, AnyStore};
use synmem_core::store::{
    conv_forward_addresses, conv_reverse_addresses, BitmapStore, ConvGeometry, CrossbarStore, CsrStore,
    FunctionalStore, SynapseStore,
};
use synmem_core::trace::BankKind;

fn matrix(n_pre: usize, n_post: usize, density: f64, seed: u64) -> SynapseMatrix<f64> {
    SynapseMatrix::random(n_pre, n_post, density, &mut seeded(seed)).unwrap()
}

fn all_stores(m: &SynapseMatrix<f64>, b_w: u32, w_word: u32) -> Vec<Box<dyn SynapseStore<f64>>> {
    vec![
        Box::new(CrossbarStore::build(m, b_w).unwrap()),
        Box::new(CsrStore::build(m, b_w).unwrap()),
        Box::new(BitmapStore::build_with_word(m, b_w, w_word).unwrap()),
        Box::new(FunctionalStore::fully_connected(m.n_pre(), m.n_post(), m.quantized(b_w).weights(), b_w).unwrap()),
    ]
}

/// Sorted `(index, weight)` pairs with absent or zero weights dropped.
fn nonzero(mut v: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    v.retain(|&(_, w)| w != 0.0);
    v.sort_by_key(|&(i, _)| i);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_scheme_decodes_the_quantized_matrix(
        n_pre in 1usize..20, n_post in 1usize..40, density in 0.0f64..=1.0, b_w in 2u32..=8,
        w_word in 1u32..=64, seed in any::<u64>(),
    ) {
        let m = matrix(n_pre, n_post, density, seed);
        let q = m.quantized(b_w);
        for s in all_stores(&m, b_w, w_word) {
            let d = s.decode();
            prop_assert_eq!(d.weights(), q.weights(), "{}", s.scheme());
        }
        for s in &all_stores(&m, b_w, w_word)[1..3] {
            let d = s.decode();
            prop_assert_eq!(d.mask(), m.mask());
            prop_assert_eq!(s.synapse_count(), m.nnz() as u64);
        }
    }

    #[test]
    fn lookups_agree_across_schemes(
        n_pre in 1usize..16, n_post in 1usize..30, density in 0.0f64..=1.0, b_w in 2u32..=6, seed in any::<u64>(),
    ) {
        let m = matrix(n_pre, n_post, density, seed);
        let stores = all_stores(&m, b_w, 32);
        for pre in 0..n_pre {
            let expect = nonzero(stores[0].forward_lookup(pre).unwrap().0);
            for s in &stores[1..] {
                prop_assert_eq!(&nonzero(s.forward_lookup(pre).unwrap().0), &expect);
            }
        }
        for post in 0..n_post {
            let expect = nonzero(stores[0].reverse_lookup(post).unwrap().0);
            for s in &stores[1..] {
                prop_assert_eq!(&nonzero(s.reverse_lookup(post).unwrap().0), &expect);
            }
        }
    }

    #[test]
    fn writes_land_in_every_scheme(
        n_pre in 1usize..10, n_post in 1usize..20, b_w in 2u32..=6, seed in any::<u64>(), value in -1.0f64..1.0,
    ) {
        let m = matrix(n_pre, n_post, 0.5, seed);
        let Some(k) = m.mask().iter().position(|&b| b) else { return Ok(()) };
        let (pre, post) = (k / n_post, k % n_post);
        let q = synmem_core::quant::quantize_weight(value, b_w);
        for mut s in all_stores(&m, b_w, 32) {
            let t = s.write_weight(pre, post, value).unwrap();
            prop_assert_eq!(t.counts(&s.weight_bank()).writes, 1);
            prop_assert_eq!(s.decode().weight(pre, post), q);
        }
    }

    #[test]
    fn pass_traces_are_sums_of_lookups(
        n_pre in 1usize..12, n_post in 1usize..40, density in 0.0f64..=1.0, w_word in 1u32..=64, seed in any::<u64>(),
    ) {
        let m = matrix(n_pre, n_post, density, seed);
        for s in all_stores(&m, 4, w_word) {
            let mut fwd = s.empty_trace();
            for pre in 0..n_pre {
                fwd += &s.forward_lookup(pre).unwrap().1;
            }
            let mut rev = s.empty_trace();
            for post in 0..n_post {
                rev += &s.reverse_lookup(post).unwrap().1;
            }
            prop_assert_eq!(s.forward_pass_trace(), fwd, "{}", s.scheme());
            prop_assert_eq!(s.reverse_pass_trace(), rev, "{}", s.scheme());
        }
    }

    #[test]
    fn storage_follows_closed_forms(
        n_pre in 1usize..30, n_post in 1usize..70, density in 0.0f64..=1.0, b_w in 2u32..=8,
        w_word in 1u32..=64, seed in any::<u64>(),
    ) {
        let m = matrix(n_pre, n_post, density, seed);
        let (np, nq, nnz, b) = (n_pre as u64, n_post as u64, m.nnz() as u64, b_w as u64);
        let lg = |x: u64| if x <= 1 { 0 } else { 64 - (x - 1).leading_zeros() as u64 };

        prop_assert_eq!(CrossbarStore::build(&m, b_w).unwrap().storage_bits(), np * nq * b);

        let csr = CsrStore::build(&m, b_w).unwrap().storage();
        prop_assert_eq!(csr.bank(BankKind::Weight), nnz * b);
        prop_assert_eq!(csr.bank(BankKind::ColIdx), nnz * lg(nq));
        prop_assert_eq!(csr.bank(BankKind::RowPtr), (np + 1) * lg(nnz + 1));

        let bmp = BitmapStore::build_with_word(&m, b_w, w_word).unwrap().storage();
        let wpr = nq.div_ceil(w_word as u64);
        prop_assert_eq!(bmp.bank(BankKind::Weight), nnz * b);
        prop_assert_eq!(bmp.bank(BankKind::Bitmap), np * wpr * w_word as u64);
        prop_assert_eq!(bmp.bank(BankKind::RowPtr), np * lg(nnz + 1));
    }

    #[test]
    fn sparse_storage_grows_with_nonzeros(n_pre in 2usize..20, n_post in 2usize..50, seed in any::<u64>()) {
        let mut last = (0u64, 0u64);
        let mut cb = None;
        for k in 0..=10 {
            let m = matrix(n_pre, n_post, k as f64 / 10.0, seed);
            let (c, b) = (CsrStore::build(&m, 4).unwrap().storage_bits(), BitmapStore::build(&m, 4).unwrap().storage_bits());
            prop_assert!(c >= last.0 && b >= last.1);
            last = (c, b);
            let x = CrossbarStore::build(&m, 4).unwrap().storage_bits();
            prop_assert_eq!(*cb.get_or_insert(x), x);
        }
    }

    #[test]
    fn container_round_trips(
        n_pre in 1usize..12, n_post in 1usize..30, density in 0.0f64..=1.0, b_w in 2u32..=8, seed in any::<u64>(),
    ) {
        let m = matrix(n_pre, n_post, density, seed);
        let stores = [
            AnyStore::Crossbar(CrossbarStore::build(&m, b_w).unwrap()),
            AnyStore::Csr(CsrStore::build(&m, b_w).unwrap()),
            AnyStore::Bitmap(BitmapStore::build(&m, b_w).unwrap()),
            AnyStore::Functional(FunctionalStore::fully_connected(n_pre, n_post, m.quantized(b_w).weights(), b_w).unwrap()),
        ];
        for s in &stores {
            let bytes = encode(s);
            let back = decode::<f64>(&bytes).unwrap();
            prop_assert_eq!(back.as_store().decode(), s.as_store().decode());
            prop_assert_eq!(back.as_store().forward_pass_trace(), s.as_store().forward_pass_trace());
            prop_assert_eq!(encode(&back), bytes);
        }
    }

    #[test]
    fn conv_reverse_addresses_transpose_forward(
        in_h in 1usize..7, in_w in 1usize..7, kh in 0usize..3, kw in 0usize..3, c_in in 1usize..4, c_out in 1usize..4,
    ) {
        let g = ConvGeometry::new(in_h, in_w, 2 * kh + 1, 2 * kw + 1, c_in, c_out).unwrap();
        let mut forward = Vec::new();
        for pre in 0..g.n_pre() {
            for link in conv_forward_addresses(&g, g.coord(pre)).unwrap() {
                forward.push((pre, g.post_id(link.neuron), link.kernel));
            }
        }
        let mut reverse = Vec::new();
        for post in 0..g.n_post() {
            for link in conv_reverse_addresses(&g, g.coord(post)).unwrap() {
                reverse.push((g.pre_id(link.neuron), post, link.kernel));
            }
        }
        forward.sort_by_key(|&(a, b, k)| (a, b, k.ic, k.oc, k.pos_r, k.pos_c));
        reverse.sort_by_key(|&(a, b, k)| (a, b, k.ic, k.oc, k.pos_r, k.pos_c));
        prop_assert_eq!(forward.len() as u64, g.connection_count());
        prop_assert_eq!(forward, reverse);
    }
}

#[test]
fn conv_csr_matches_functional_store() {
    let g = ConvGeometry::new(6, 5, 3, 3, 2, 3).unwrap();
    let mut rng = seeded(3);
    let kernel: Vec<f64> = (0..g.kernel_len()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
    let f = FunctionalStore::build(g, &kernel, 5).unwrap();
    let csr = f.to_csr();
    assert_eq!(csr.decode().weights(), f.decode().weights());
    assert_eq!(csr.nnz() as u64, g.connection_count());
    for post in 0..g.n_post() {
        assert_eq!(nonzero(csr.reverse_lookup(post).unwrap().0), nonzero(f.reverse_lookup(post).unwrap().0));
    }
}
