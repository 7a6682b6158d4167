use std::cell::RefCell;
use std::rc::Rc;

use ganc::codec::{decode_bytes, encode_image};
use ganc::container::{deserialize, CodingMode};
use ganc::entropy::{
    ac_decode, ac_encode, adaptive_bit_model, decode_with_model, encode_with_model, BitContext,
    CodedStream, ModelSpec, ProbabilityModel,
};
use ganc::model::{generate_weights, ModelConfig, Tokenizer};
use ganc::{CodecError, Image};
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = ModelSpec> {
    prop_oneof![
        Just(ModelSpec::Uniform),
        (0u32..=2).prop_map(|order| ModelSpec::Adaptive { order }),
    ]
}

fn tokens_strategy() -> impl Strategy<Value = (u32, Vec<u64>)> {
    (1u32..=64).prop_flat_map(|bits| {
        let max = if bits == 64 {
            u64::MAX
        } else {
            (1u64 << bits) - 1
        };
        (Just(bits), prop::collection::vec(0..=max, 0..200))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn coder_round_trips((bits, tokens) in tokens_strategy(), spec in spec_strategy()) {
        let stream = ac_encode(&tokens, bits, spec).unwrap();
        let parsed = CodedStream::from_bytes(&stream.to_bytes()).unwrap();
        prop_assert_eq!(ac_decode(&parsed).unwrap(), tokens);
    }

    #[test]
    fn hostile_streams_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
        if let Ok(stream) = CodedStream::from_bytes(&bytes) {
            let _ = ac_decode(&stream);
        }
        let _ = deserialize(&bytes);
    }

    #[test]
    fn hostile_containers_never_panic(
        bytes in prop::collection::vec(any::<u8>(), 0..200),
        arith in any::<bool>(),
    ) {
        // a valid 16x16, patch 4, 8-bit header followed by junk
        let mut data = b"GANC\x01\x10\x00\x10\x00\x04\x08".to_vec();
        data.push(arith as u8);
        data.extend_from_slice(&(bytes.len().min(80) as u32).to_le_bytes());
        data.extend_from_slice(&bytes);
        assert_eq!(ganc::container::ContainerHeader::parse(&data).unwrap().payload_len as usize, bytes.len().min(80));
        let _ = deserialize(&data);
    }
}

/// Records every `(context, probability, bit)` it is asked about.
struct Tracing<M> {
    inner: M,
    trace: Rc<RefCell<Vec<(BitContext, u16, bool)>>>,
}

impl<M: ProbabilityModel> ProbabilityModel for Tracing<M> {
    fn probability(&self, ctx: &BitContext) -> u16 {
        self.inner.probability(ctx)
    }
    fn update(&mut self, ctx: &BitContext, bit: bool) {
        let p = self.inner.probability(ctx);
        self.trace.borrow_mut().push((*ctx, p, bit));
        self.inner.update(ctx, bit);
    }
    fn reset(&mut self) {
        self.inner.reset();
    }
}

#[test]
fn encoder_and_decoder_see_identical_model_traces() {
    let tokens: Vec<u64> = (0..500u64).map(|i| (i * i * 31 + i / 3) % 1024).collect();
    for order in 0..=2 {
        let enc_trace = Rc::new(RefCell::new(Vec::new()));
        let dec_trace = Rc::new(RefCell::new(Vec::new()));
        let mut enc_model = Tracing {
            inner: adaptive_bit_model(order, 10).unwrap(),
            trace: enc_trace.clone(),
        };
        let coded = encode_with_model(&tokens, 10, &mut enc_model).unwrap();
        let mut dec_model = Tracing {
            inner: adaptive_bit_model(order, 10).unwrap(),
            trace: dec_trace.clone(),
        };
        let back = decode_with_model(&coded, tokens.len(), 10, &mut dec_model).unwrap();
        assert_eq!(back, tokens);
        assert_eq!(enc_trace.borrow().len(), 5000);
        assert!(*enc_trace.borrow() == *dec_trace.borrow(), "order {order}");
    }
}

#[test]
fn wrong_model_fails_or_differs() {
    let tokens: Vec<u64> = (0..200u64).map(|i| (i * 7) % 256).collect();
    let mut stream = ac_encode(&tokens, 8, ModelSpec::Adaptive { order: 2 }).unwrap();
    stream.model = ModelSpec::Adaptive { order: 0 };
    match ac_decode(&stream) {
        Ok(decoded) => assert_ne!(decoded, tokens),
        Err(e) => assert!(matches!(
            e,
            CodecError::Format(_) | CodecError::Truncated(_)
        )),
    }
}

fn tokenizer(depth: usize) -> Tokenizer {
    let cfg = ModelConfig {
        patch: 8,
        latent_dim: 32,
        heads: 4,
        depth,
        bits: 18,
    };
    Tokenizer::from_weights(&generate_weights(&cfg, 11, None).unwrap()).unwrap()
}

fn photo(h: usize, w: usize) -> Image {
    Image::from_fn(h, w, |y, x, c| {
        let r = ((y as f64 - 20.0).powi(2) + (x as f64 - 30.0).powi(2)).sqrt();
        0.4 * (r / 6.0).cos() - 0.1 * c as f64
    })
    .unwrap()
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let tok = tokenizer(2);
    let img = photo(64, 64);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let grid = tok.tokenize(&img).unwrap();
                let recon = tok.detokenize(&grid).unwrap();
                (grid, recon)
            })
    };
    let (g1, r1) = run(1);
    for threads in [2, 4, 7] {
        let (g, r) = run(threads);
        assert_eq!(g, g1);
        assert!(r == r1, "reconstruction differs with {threads} threads");
    }
}

#[test]
fn encode_is_deterministic_and_decode_recovers_tokens() {
    let tok = tokenizer(2);
    let img = photo(48, 64);
    for mode in [
        CodingMode::Raw,
        CodingMode::Arithmetic(ModelSpec::Adaptive { order: 0 }),
        CodingMode::Arithmetic(ModelSpec::Adaptive { order: 2 }),
    ] {
        let a = encode_image(&tok, &img, mode, None).unwrap();
        let b = encode_image(&tokenizer(2), &img, mode, None).unwrap();
        assert_eq!(a.bytes, b.bytes);
        let dec = decode_bytes(&tok, &a.bytes, None).unwrap();
        assert_eq!(dec.container.grid, a.grid);
        assert!(dec.image.same_shape(&img));
    }
}

#[test]
fn indivisible_image_is_a_shape_error() {
    let tok = tokenizer(1);
    let err = encode_image(&tok, &photo(20, 24), CodingMode::Raw, None).unwrap_err();
    assert!(matches!(err, CodecError::Shape(_)), "{err}");
    assert_eq!(err.exit_code(), 4);
}
