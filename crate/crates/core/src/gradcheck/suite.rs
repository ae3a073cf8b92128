//! Gradient checks for every differentiable primitive and composite block.

use super::harness::{check_function, randn, CheckReport, Tolerance};
use crate::error::Result;
use crate::nn::{
    Builder, FeatureExtractor, GfmSynth, MambaVr, Msmm, NetConfig, ParamStore, Params, Tfe, TokenCoord,
};
use crate::sequencing::{add_temporal_embedding, apply_spe, build_spe, insert_registers, masm_orders, RegisterLayout, Slot, TokenPos};
use crate::ssm::SsmParams;
use crate::tensor::{ConvGeometry, Tensor, Var};
use crate::train::charbonnier_loss;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Instance counts and tolerances of a suite run.
#[derive(Clone, Debug)]
pub struct SuiteConfig {
    /// Random instances per primitive or block.
    pub instances: usize,
    pub seed: u64,
    pub tol: Tolerance,
    /// Parameter tensors probed per block instance.
    pub params_per_instance: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            seed: 0,
            tol: Tolerance::default(),
            params_per_instance: 3,
        }
    }
}

type Case = fn(&mut ChaCha8Rng, Tolerance) -> Result<CheckReport>;

fn dim(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

fn shape(rng: &mut ChaCha8Rng, rank: usize) -> Vec<usize> {
    (0..rank).map(|_| dim(rng, 1, 4)).collect()
}

/// Values bounded away from zero with random sign.
fn away_from_zero(rng: &mut ChaCha8Rng, s: &[usize]) -> Tensor<f64> {
    randn(rng, s).map(|v| v.signum() * (0.5 + v.abs()))
}

macro_rules! unary {
    ($name:literal, $input:expr, $m:ident($($arg:expr),*)) => {
        (($name), {
            fn case(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
                let rank = dim(rng, 1, 3);
                let s = shape(rng, rank);
                #[allow(clippy::redundant_closure_call)]
                let x = ($input)(rng, &s);
                check_function($name, &[x], &[0], |_, v| Ok(v[0].$m($($arg),*)), tol, rng)
            }
            case as Case
        })
    };
}

fn normal(rng: &mut ChaCha8Rng, s: &[usize]) -> Tensor<f64> {
    randn(rng, s)
}

fn positive(rng: &mut ChaCha8Rng, s: &[usize]) -> Tensor<f64> {
    randn(rng, s).map(|v| 0.5 + v.abs())
}

/// Second operand shape: equal, a trailing slice, or a singleton axis.
fn broadcast_partner(rng: &mut ChaCha8Rng, s: &[usize]) -> Vec<usize> {
    match rng.random_range(0..3) {
        0 => s.to_vec(),
        1 => s[1..].to_vec(),
        _ => {
            let mut t = s.to_vec();
            let a = rng.random_range(0..t.len());
            t[a] = 1;
            t
        }
    }
}

macro_rules! binary {
    ($name:literal, $method:ident, $rhs:expr) => {
        (($name), {
            fn case(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
                let s = shape(rng, 2);
                let t = broadcast_partner(rng, &s);
                let a = randn(rng, &s);
                #[allow(clippy::redundant_closure_call)]
                let b = ($rhs)(rng, &t);
                check_function($name, &[a, b], &[0, 1], |_, v| v[0].$method(&v[1]), tol, rng)
            }
            case as Case
        })
    };
}

fn primitives() -> Vec<(&'static str, Case)> {
    vec![
        binary!("add", add, normal),
        binary!("sub", sub, normal),
        binary!("mul", mul, normal),
        binary!("div", div, away_from_zero),
        unary!("affine", normal, affine(-1.7, 0.3)),
        unary!("scale", normal, scale(2.5)),
        unary!("add_scalar", normal, add_scalar(0.7)),
        unary!("relu", normal, relu()),
        unary!("sigmoid", normal, sigmoid()),
        unary!("tanh", normal, tanh()),
        unary!("exp", normal, exp()),
        unary!("softplus", normal, softplus()),
        unary!("sqrt", positive, sqrt()),
        unary!("square", normal, square()),
        unary!("neg", normal, neg()),
        unary!("sum", normal, sum()),
        unary!("mean", normal, mean()),
        ("sum_axis", case_sum_axis),
        ("mean_axis", case_mean_axis),
        ("matmul", case_matmul),
        ("reshape", case_reshape),
        ("permute", case_permute),
        ("narrow", case_narrow),
        ("concat", case_concat),
        ("stack", case_stack),
        ("conv2d", case_conv2d),
        ("conv3d", case_conv3d),
        ("index_rows", case_index_rows),
        ("gather_permute", case_gather_permute),
        ("scatter_permute", case_scatter_permute),
        ("flip_rows", case_flip_rows),
        ("pixel_shuffle", case_pixel_shuffle),
        ("pixel_unshuffle", case_pixel_unshuffle),
        ("avg_pool2", case_avg_pool2),
        ("upsample_bilinear2x", case_upsample),
        ("rotate_pairs", case_rotate_pairs),
        ("selective_scan", case_selective_scan),
        ("masm_scan_order", case_masm_order),
        ("insert_registers", case_insert_registers),
        ("apply_spe", case_apply_spe),
        ("temporal_embedding", case_temporal_embedding),
    ]
}

fn case_sum_axis(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let s = shape(rng, 3);
    let axis = rng.random_range(-3i64..3) as isize;
    let keep = rng.random_bool(0.5);
    check_function("sum_axis", &[randn(rng, &s)], &[0], move |_, v| Ok(v[0].sum_axis(axis, keep)), tol, rng)
}

fn case_mean_axis(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let s = shape(rng, 3);
    let axis = rng.random_range(-3i64..3) as isize;
    let keep = rng.random_bool(0.5);
    check_function("mean_axis", &[randn(rng, &s)], &[0], move |_, v| Ok(v[0].mean_axis(axis, keep)), tol, rng)
}

fn case_matmul(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let (m, k, n) = (dim(rng, 1, 5), dim(rng, 1, 5), dim(rng, 1, 5));
    let (sa, sb) = match rng.random_range(0..3) {
        0 => (vec![m, k], vec![k, n]),
        1 => {
            let b = dim(rng, 2, 3);
            (vec![b, m, k], vec![b, k, n])
        }
        _ => (vec![dim(rng, 2, 3), m, k], vec![k, n]),
    };
    let inputs = [randn(rng, &sa), randn(rng, &sb)];
    check_function("matmul", &inputs, &[0, 1], |_, v| v[0].matmul(&v[1]), tol, rng)
}

fn case_reshape(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let s = shape(rng, 3);
    let n: usize = s.iter().product();
    check_function("reshape", &[randn(rng, &s)], &[0], move |_, v| v[0].reshape(&[n]), tol, rng)
}

fn case_permute(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let s = shape(rng, 3);
    let mut axes = vec![0, 1, 2];
    axes.shuffle(rng);
    check_function("permute", &[randn(rng, &s)], &[0], move |_, v| v[0].permute(&axes), tol, rng)
}

fn case_narrow(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let s = shape(rng, 3);
    let axis = rng.random_range(0..3);
    let start = rng.random_range(0..s[axis]);
    let len = rng.random_range(1..=s[axis] - start);
    check_function("narrow", &[randn(rng, &s)], &[0], move |_, v| v[0].narrow(axis as isize, start, len), tol, rng)
}

fn case_concat(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let s = shape(rng, 3);
    let axis = rng.random_range(0..3);
    let mut t = s.clone();
    t[axis] = dim(rng, 1, 3);
    let inputs = [randn(rng, &s), randn(rng, &t)];
    check_function("concat", &inputs, &[0, 1], move |_, v| Var::concat(v, axis as isize), tol, rng)
}

fn case_stack(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let s = shape(rng, 2);
    let axis = rng.random_range(0..3);
    let inputs = [randn(rng, &s), randn(rng, &s), randn(rng, &s)];
    check_function("stack", &inputs, &[0, 1, 2], move |_, v| Var::stack(v, axis), tol, rng)
}

fn case_conv2d(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let (ci, co) = (dim(rng, 1, 3), dim(rng, 1, 3));
    let (h, w) = (dim(rng, 3, 6), dim(rng, 3, 6));
    let k = [1, 2, 3][rng.random_range(0..3)];
    let stride = dim(rng, 1, 2);
    let pad = rng.random_range(0..=k / 2);
    let geom = ConvGeometry::new([1, stride, stride], [0, pad, pad]);
    let inputs = [randn(rng, &[ci, h, w]), randn(rng, &[co, ci, k, k]), randn(rng, &[co])];
    check_function("conv2d", &inputs, &[0, 1, 2], move |_, v| v[0].conv2d(&v[1], Some(&v[2]), geom), tol, rng)
}

fn case_conv3d(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let (ci, co) = (dim(rng, 1, 3), dim(rng, 1, 3));
    let (t, h, w) = (dim(rng, 2, 4), dim(rng, 3, 5), dim(rng, 3, 5));
    let k = [dim(rng, 1, 2), dim(rng, 1, 3), dim(rng, 1, 3)];
    let stride = [1, dim(rng, 1, 2), dim(rng, 1, 2)];
    let pad = [k[0] / 2, k[1] / 2, k[2] / 2];
    let geom = ConvGeometry::new(stride, pad);
    let inputs = [randn(rng, &[ci, t, h, w]), randn(rng, &[co, ci, k[0], k[1], k[2]]), randn(rng, &[co])];
    check_function("conv3d", &inputs, &[0, 1, 2], move |_, v| v[0].conv3d(&v[1], Some(&v[2]), geom), tol, rng)
}

fn case_index_rows(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let (l, c) = (dim(rng, 2, 6), dim(rng, 1, 3));
    let idx: Vec<usize> = (0..dim(rng, 1, 8)).map(|_| rng.random_range(0..l)).collect();
    check_function("index_rows", &[randn(rng, &[l, c])], &[0], move |_, v| v[0].index_rows(&idx), tol, rng)
}

fn random_perm(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn case_gather_permute(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let (l, c) = (dim(rng, 2, 16), dim(rng, 1, 3));
    let perm = random_perm(rng, l);
    check_function("gather_permute", &[randn(rng, &[l, c])], &[0], move |_, v| v[0].gather_permute(&perm), tol, rng)
}

fn case_scatter_permute(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let (l, c) = (dim(rng, 2, 16), dim(rng, 1, 3));
    let perm = random_perm(rng, l);
    check_function("scatter_permute", &[randn(rng, &[l, c])], &[0], move |_, v| v[0].scatter_permute(&perm), tol, rng)
}

fn case_flip_rows(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let s = [dim(rng, 1, 6), dim(rng, 1, 3)];
    check_function("flip_rows", &[randn(rng, &s)], &[0], |_, v| Ok(v[0].flip_rows()), tol, rng)
}

fn case_pixel_shuffle(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let r = dim(rng, 1, 2);
    let s = [dim(rng, 1, 2) * r * r, dim(rng, 1, 3), dim(rng, 1, 3)];
    check_function("pixel_shuffle", &[randn(rng, &s)], &[0], move |_, v| v[0].pixel_shuffle(r), tol, rng)
}

fn case_pixel_unshuffle(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let r = dim(rng, 1, 2);
    let s = [dim(rng, 1, 2), dim(rng, 1, 3) * r, dim(rng, 1, 3) * r];
    check_function("pixel_unshuffle", &[randn(rng, &s)], &[0], move |_, v| v[0].pixel_unshuffle(r), tol, rng)
}

fn case_avg_pool2(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let s = [dim(rng, 1, 3), 2 * dim(rng, 1, 3), 2 * dim(rng, 1, 3)];
    check_function("avg_pool2", &[randn(rng, &s)], &[0], |_, v| v[0].avg_pool2(), tol, rng)
}

fn case_upsample(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let s = [dim(rng, 1, 3), dim(rng, 1, 4), dim(rng, 1, 4)];
    check_function("upsample_bilinear2x", &[randn(rng, &s)], &[0], |_, v| v[0].upsample_bilinear2x(), tol, rng)
}

fn case_rotate_pairs(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let (l, d) = (dim(rng, 1, 5), 2 * dim(rng, 1, 3));
    let angles: Vec<f64> = (0..l * d / 2).map(|_| rng.random_range(-3.2..3.2)).collect();
    check_function("rotate_pairs", &[randn(rng, &[l, d])], &[0], move |_, v| v[0].rotate_pairs(&angles), tol, rng)
}

fn case_selective_scan(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let (l, c, s) = (dim(rng, 1, 8), dim(rng, 1, 4), dim(rng, 1, 4));
    let p = SsmParams::<f64>::init(c, s, rng);
    // move the step sizes into a range where the state carries information
    let b_delta = p.b_delta.map(|v| v + 1.5);
    let inputs = [
        randn(rng, &[l, c]),
        p.a_log,
        p.d,
        p.w_delta,
        b_delta,
        p.w_b,
        p.w_c,
        randn(rng, &[c, s]).map(|v| 0.5 * v),
    ];
    check_function(
        "selective_scan",
        &inputs,
        &[0, 1, 2, 3, 4, 5, 6, 7],
        |_, v| {
            let ssm = crate::ssm::SsmVars {
                a_log: v[1],
                d: v[2],
                w_delta: v[3],
                b_delta: v[4],
                w_b: v[5],
                w_c: v[6],
            };
            let (y, h) = ssm.forward(v[0], Some(v[7]))?;
            flat_concat(&[y, h])
        },
        tol,
        rng,
    )
}

fn case_masm_order(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let (h, w, c) = (dim(rng, 1, 4), dim(rng, 1, 4), dim(rng, 1, 3));
    let k = rng.random_range(0..4);
    let x = randn(rng, &[2 * h * w, c]);
    check_function(
        "masm_scan_order",
        &[x],
        &[0],
        move |_, v| {
            let o = &masm_orders(h, w)?[k];
            // a position-dependent weight makes the order visible to the check
            let g = o.gather(&v[0])?;
            let ramp = g.tape().constant(Tensor::from_fn(&[g.shape()[0], 1], |i| 1.0 + i as f64));
            o.scatter(&g.mul(&ramp)?)
        },
        tol,
        rng,
    )
}

fn case_insert_registers(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let (l, n, c) = (dim(rng, 1, 8), dim(rng, 1, 4), dim(rng, 1, 3));
    let inputs = [randn(rng, &[l, c]), randn(rng, &[n, c])];
    check_function(
        "insert_registers",
        &inputs,
        &[0, 1],
        move |_, v| insert_registers(&v[0], &RegisterLayout::new(l, n), &v[1]),
        tol,
        rng,
    )
}

fn case_apply_spe(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let (h, w, d) = (dim(rng, 1, 3), dim(rng, 1, 3), 4 * dim(rng, 1, 2));
    let n = dim(rng, 0, 2);
    let layout = RegisterLayout::new(h * w, n);
    let pos: Vec<TokenPos> = layout
        .slots()
        .into_iter()
        .map(|s| match s {
            Slot::Content(i) => TokenPos::At(i / w, i % w),
            Slot::Register(_) => TokenPos::Register,
        })
        .collect();
    let x = randn(rng, &[pos.len(), d]);
    let spe = build_spe(h, w, d)?;
    check_function("apply_spe", &[x], &[0], move |_, v| apply_spe(&v[0], &pos, &spe), tol, rng)
}

fn case_temporal_embedding(rng: &mut ChaCha8Rng, tol: Tolerance) -> Result<CheckReport> {
    let (l, c, t) = (dim(rng, 1, 8), dim(rng, 1, 3), dim(rng, 1, 4));
    let frames: Vec<usize> = (0..l).map(|_| rng.random_range(0..t)).collect();
    let inputs = [randn(rng, &[l, c]), randn(rng, &[t, c])];
    check_function(
        "temporal_embedding",
        &inputs,
        &[0, 1],
        move |_, v| add_temporal_embedding(&v[0], &v[1], &frames),
        tol,
        rng,
    )
}

/// Flattens and joins outputs so one weighted sum covers all of them.
fn flat_concat<'t>(parts: &[Var<'t, f64>]) -> Result<Var<'t, f64>> {
    let flat = parts
        .iter()
        .map(|p| p.reshape(&[p.shape().iter().product()]))
        .collect::<Result<Vec<_>>>()?;
    Var::concat(&flat, 0)
}

/// Widths used for block checks.
pub fn block_net(base: &NetConfig) -> NetConfig {
    NetConfig {
        channels: 4,
        expand: 2,
        state: 2,
        pyramid_levels: 2,
        res_blocks: 1,
        registers_per_frame: 1,
        attn_hidden: 2,
        max_frames: 4,
        ..base.clone()
    }
}

type BlockFn = Box<dyn for<'t> Fn(&Params<'t, f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>>;

/// Block under test together with its data inputs.
struct BlockCase {
    name: String,
    store: ParamStore<f64>,
    data: Vec<Tensor<f64>>,
    run: BlockFn,
}

fn check_block(case: BlockCase, cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<CheckReport> {
    let nd = case.data.len();
    let mut inputs = case.data;
    inputs.extend(case.store.values().iter().cloned());
    let mut picks: Vec<usize> = (nd..inputs.len()).collect();
    picks.shuffle(rng);
    picks.truncate(cfg.params_per_instance);
    let mut check: Vec<usize> = (0..nd).collect();
    check.extend(picks);
    let run = case.run;
    check_function(
        &case.name,
        &inputs,
        &check,
        |_, v| run(&Params::from_vars(v[nd..].to_vec()), &v[..nd]),
        cfg.tol,
        rng,
    )
}

fn build<T>(
    net: &NetConfig,
    rng: &mut ChaCha8Rng,
    make: impl FnOnce(&mut Builder<'_, f64>, &NetConfig) -> Result<T>,
) -> Result<(T, ParamStore<f64>)> {
    let mut store = ParamStore::new();
    let mut init_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let block = make(&mut Builder::new(&mut store, &mut init_rng), net)?;
    // zero-initialised branches would hide their gradients
    store.perturb(rng, 0.1);
    Ok((block, store))
}

fn block_cases(net: &NetConfig, rng: &mut ChaCha8Rng) -> Result<Vec<BlockCase>> {
    let c = net.channels;
    let (h, w) = (4, 4);
    let mut cases = Vec::new();

    let (ex, store) = build(net, rng, FeatureExtractor::new)?;
    cases.push(BlockCase {
        name: "extract_features".into(),
        store,
        data: vec![randn(rng, &[3, 8, 8])],
        run: Box::new(move |p, v| ex.forward(p, &v[0])),
    });

    let (gfm, store) = build(net, rng, GfmSynth::new)?;
    cases.push(BlockCase {
        name: "gfm_synthesize".into(),
        store,
        data: vec![randn(rng, &[c, h, w]), randn(rng, &[c, h, w])],
        run: Box::new(move |p, v| gfm.forward(p, &v[0], &v[1])),
    });

    let (tfe, store) = build(net, rng, Tfe::new)?;
    cases.push(BlockCase {
        name: "tfe_refine".into(),
        store,
        data: vec![randn(rng, &[c, h, w]), randn(rng, &[c, h, w]), randn(rng, &[c, h, w])],
        run: Box::new(move |p, v| tfe.forward(p, &v[0], &v[1], &v[2])),
    });

    let (vr, store) = build(net, rng, MambaVr::new)?;
    let frames = 2;
    let coords = TokenCoord::grid(frames, 2, 2);
    let e = net.mixer().inner();
    cases.push(BlockCase {
        name: "mambavr_block".into(),
        store,
        data: vec![randn(rng, &[coords.len(), c]), randn(rng, &[e, net.state]).map(|v| 0.5 * v)],
        run: Box::new(move |p, v| {
            let layout = vr.layout(coords.len(), frames);
            let (y, s) = vr.forward(p, &v[0], &coords, &layout, Some(v[1]))?;
            flat_concat(&[y, s])
        }),
    });

    let (msmm, store) = build(net, rng, |b, n| Msmm::new(b, n, 3))?;
    cases.push(BlockCase {
        name: "msmm_enhance".into(),
        store,
        data: (0..3).map(|_| randn(rng, &[c, h, w])).collect(),
        run: Box::new(move |p, v| {
            let out = msmm.forward(p, v)?;
            Var::stack(&out, 0)
        }),
    });

    cases.push(BlockCase {
        name: "charbonnier_loss".into(),
        store: ParamStore::new(),
        data: (0..4).map(|_| randn(rng, &[3, 3, 3])).collect(),
        run: Box::new(|_, v| charbonnier_loss(&v[..2], &v[2..])),
    });
    Ok(cases)
}

/// Checks every primitive on `cfg.instances` random shapes.
pub fn run_primitives(cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    primitives()
        .into_iter()
        .map(|(name, case)| {
            let mut total = CheckReport::new(name);
            for _ in 0..cfg.instances {
                total.merge(case(&mut rng, cfg.tol)?);
            }
            Ok(total)
        })
        .collect()
}

/// Checks the composite blocks built from `net` (widths shrunk by
/// [`block_net`]); `tag` is appended to each report name.
pub fn run_blocks(cfg: &SuiteConfig, net: &NetConfig, tag: &str) -> Result<Vec<CheckReport>> {
    let net = block_net(net);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut totals: Vec<CheckReport> = Vec::new();
    for _ in 0..cfg.instances {
        for (i, case) in block_cases(&net, &mut rng)?.into_iter().enumerate() {
            let name = if tag.is_empty() { case.name.clone() } else { format!("{}[{tag}]", case.name) };
            if totals.len() <= i {
                totals.push(CheckReport::new(name));
            }
            totals[i].merge(check_block(case, cfg, &mut rng)?);
        }
    }
    Ok(totals)
}

/// The four register/rotary combinations of the token-mixing block.
pub fn ablation_variants() -> [(&'static str, NetConfig); 4] {
    let with = |registers, spe| NetConfig {
        use_registers: registers,
        use_spe: spe,
        ..NetConfig::default()
    };
    [
        ("videomamba", with(false, false)),
        ("w/R", with(true, false)),
        ("w/F-RoPE", with(false, true)),
        ("mambavr", with(true, true)),
    ]
}

/// Primitives, then the blocks of every ablation variant.
pub fn run_all(cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let mut out = run_primitives(cfg)?;
    for (tag, net) in ablation_variants() {
        out.extend(run_blocks(cfg, &net, tag)?);
    }
    Ok(out)
}
