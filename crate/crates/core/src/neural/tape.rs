use serde::{Deserialize, Serialize};

/// Added inside the logarithm of the cross-entropy.
pub const CE_EPS: f64 = 1e-12;
/// Correlations are clamped to this magnitude.
pub const RHO_MAX: f64 = 0.999;
/// Log standard deviations are clamped to this range.
pub const LOG_SIGMA_RANGE: (f64, f64) = (-9.0, 6.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "tensor shape {shape:?} does not match data"
        );
        Self { shape, values }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter `{name}`");
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn value_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn fill(&mut self, value: f64) {
        for t in &mut self.tensors {
            t.values.fill(value);
        }
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients(self.tensors.iter().map(|t| vec![0.0; t.len()]).collect())
    }
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(Vec<Vec<f64>>);

impl Gradients {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.0[id.0]
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn global_norm(&self) -> f64 {
        self.0.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|g| g.is_finite())
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().flatten().for_each(|g| *g *= s);
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn clear(&mut self) {
        self.0.iter_mut().for_each(|b| b.fill(0.0));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatVec {
        w: ParamId,
        x: Var,
    },
    AddParam {
        x: Var,
        b: ParamId,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    Softmax(Var),
    CrossEntropy {
        probs: Var,
        target: Vec<f64>,
    },
    Mse {
        x: Var,
        target: Vec<f64>,
    },
    MixtureNll {
        params: Var,
        anchor: Var,
        target: [f64; 2],
    },
    Sum(Vec<Var>),
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Records a forward computation for reverse-mode differentiation.
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::with_capacity(512),
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let x = self.value(v);
        assert_eq!(x.len(), 1, "not a scalar");
        x[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, values: Vec<f64>) -> Var {
        self.push(values, Op::Input)
    }

    /// Copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let values = self.value(v).to_vec();
        self.push(values, Op::Input)
    }

    /// Whole parameter tensor as a flat vector.
    pub fn param(&mut self, id: ParamId) -> Var {
        let values = self.store.get(id).values.clone();
        self.push(values, Op::Param(id))
    }

    /// `W x` for a `rows x cols` parameter matrix.
    pub fn matvec(&mut self, w: ParamId, x: Var) -> Var {
        let wt = self.store.get(w);
        let (rows, cols) = matrix_shape(wt);
        let xv = self.value(x);
        assert_eq!(
            xv.len(),
            cols,
            "matvec: {rows}x{cols} matrix times vector of {}",
            xv.len()
        );
        let out = wt
            .values
            .chunks_exact(cols)
            .map(|row| dot(row, xv))
            .collect();
        self.push(out, Op::MatVec { w, x })
    }

    pub fn add_param(&mut self, x: Var, b: ParamId) -> Var {
        let bv = &self.store.get(b).values;
        let out = zip_map(self.value(x), bv, |a, b| a + b);
        self.push(out, Op::AddParam { x, b })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * s).collect();
        self.push(out, Op::Scale(a, s))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.max(0.0)).collect();
        self.push(out, Op::Relu(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let out = parts
            .iter()
            .flat_map(|p| self.value(*p).iter().copied())
            .collect();
        self.push(out, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let out = self.value(x)[start..start + len].to_vec();
        self.push(out, Op::Slice { x, start })
    }

    pub fn softmax(&mut self, logits: Var) -> Var {
        let out = softmax(self.value(logits));
        self.push(out, Op::Softmax(logits))
    }

    /// `-sum_j target_j ln(probs_j + CE_EPS)`.
    pub fn cross_entropy(&mut self, probs: Var, target: &[f64]) -> Var {
        let p = self.value(probs);
        assert_eq!(p.len(), target.len(), "cross_entropy: length mismatch");
        let loss = -p
            .iter()
            .zip(target)
            .map(|(p, t)| t * (p + CE_EPS).ln())
            .sum::<f64>();
        self.push(
            vec![loss],
            Op::CrossEntropy {
                probs,
                target: target.to_vec(),
            },
        )
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, x: Var, target: &[f64]) -> Var {
        let v = self.value(x);
        assert_eq!(v.len(), target.len(), "mse: length mismatch");
        let loss = v
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / v.len() as f64;
        self.push(
            vec![loss],
            Op::Mse {
                x,
                target: target.to_vec(),
            },
        )
    }

    /// Negative log-likelihood of `target` under a bivariate Gaussian mixture
    /// whose means are offsets from `anchor`. `params` holds six raw values per
    /// component: weight logit, mean offsets x/y, log sigmas x/y, correlation
    /// pre-activation.
    pub fn mixture_nll(&mut self, params: Var, anchor: Var, target: [f64; 2]) -> Var {
        let (nll, _) = mixture_nll(self.value(params), self.value(anchor), target, false);
        self.push(
            vec![nll],
            Op::MixtureNll {
                params,
                anchor,
                target,
            },
        )
    }

    pub fn sum(&mut self, terms: &[Var]) -> Var {
        let total = terms.iter().map(|t| self.scalar(*t)).sum();
        self.push(vec![total], Op::Sum(terms.to_vec()))
    }

    /// Accumulates d`output`/d(parameter) into `grads`.
    pub fn backward(&self, output: Var, grads: &mut Gradients) {
        assert_eq!(
            self.value(output).len(),
            1,
            "backward needs a scalar output"
        );
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut send = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
                let n = self.nodes[v.0].value.len();
                f(adj[v.0].get_or_insert_with(|| vec![0.0; n]));
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => add_into(&mut grads.0[id.0], &g),
                Op::MatVec { w, x } => {
                    let wt = self.store.get(*w);
                    let (_, cols) = matrix_shape(wt);
                    let xv = &self.nodes[x.0].value;
                    let gw = &mut grads.0[w.0];
                    for (r, gr) in g.iter().enumerate() {
                        if *gr != 0.0 {
                            for (dst, xi) in gw[r * cols..(r + 1) * cols].iter_mut().zip(xv) {
                                *dst += gr * xi;
                            }
                        }
                    }
                    send(*x, &mut |dx| {
                        for (row, gr) in wt.values.chunks_exact(cols).zip(&g) {
                            if *gr != 0.0 {
                                for (d, w) in dx.iter_mut().zip(row) {
                                    *d += gr * w;
                                }
                            }
                        }
                    });
                }
                Op::AddParam { x, b } => {
                    add_into(&mut grads.0[b.0], &g);
                    send(*x, &mut |dx| add_into(dx, &g));
                }
                Op::Add(a, b) => {
                    send(*a, &mut |d| add_into(d, &g));
                    send(*b, &mut |d| add_into(d, &g));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    send(*a, &mut |d| {
                        d.iter_mut()
                            .zip(&g)
                            .zip(bv)
                            .for_each(|((d, g), y)| *d += g * y)
                    });
                    send(*b, &mut |d| {
                        d.iter_mut()
                            .zip(&g)
                            .zip(av)
                            .for_each(|((d, g), x)| *d += g * x)
                    });
                }
                Op::Scale(a, s) => send(*a, &mut |d| {
                    d.iter_mut().zip(&g).for_each(|(d, g)| *d += g * s)
                }),
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    send(*a, &mut |d| {
                        d.iter_mut()
                            .zip(&g)
                            .zip(y)
                            .for_each(|((d, g), y)| *d += g * y * (1.0 - y))
                    });
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    send(*a, &mut |d| {
                        d.iter_mut()
                            .zip(&g)
                            .zip(y)
                            .for_each(|((d, g), y)| *d += g * (1.0 - y * y))
                    });
                }
                Op::Relu(a) => {
                    let x = &self.nodes[a.0].value;
                    send(*a, &mut |d| {
                        d.iter_mut()
                            .zip(&g)
                            .zip(x)
                            .filter(|(_, x)| **x > 0.0)
                            .for_each(|((d, g), _)| *d += g)
                    });
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        send(*p, &mut |d| add_into(d, &g[offset..offset + n]));
                        offset += n;
                    }
                }
                Op::Slice { x, start } => {
                    send(*x, &mut |d| add_into(&mut d[*start..*start + g.len()], &g));
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let gy: f64 = g.iter().zip(y).map(|(g, y)| g * y).sum();
                    send(*a, &mut |d| {
                        d.iter_mut()
                            .zip(&g)
                            .zip(y)
                            .for_each(|((d, g), y)| *d += y * (g - gy))
                    });
                }
                Op::CrossEntropy { probs, target } => {
                    let p = &self.nodes[probs.0].value;
                    send(*probs, &mut |d| {
                        for ((d, p), t) in d.iter_mut().zip(p).zip(target) {
                            *d -= g[0] * t / (p + CE_EPS);
                        }
                    });
                }
                Op::Mse { x, target } => {
                    let v = &self.nodes[x.0].value;
                    let k = 2.0 * g[0] / v.len() as f64;
                    send(*x, &mut |d| {
                        for ((d, a), b) in d.iter_mut().zip(v).zip(target) {
                            *d += k * (a - b);
                        }
                    });
                }
                Op::MixtureNll {
                    params,
                    anchor,
                    target,
                } => {
                    let (pv, av) = (&self.nodes[params.0].value, &self.nodes[anchor.0].value);
                    let (_, grad) = mixture_nll(pv, av, *target, true);
                    let grad = grad.unwrap();
                    send(*params, &mut |d| {
                        d.iter_mut()
                            .zip(&grad.params)
                            .for_each(|(d, x)| *d += g[0] * x)
                    });
                    send(*anchor, &mut |d| {
                        d.iter_mut()
                            .zip(&grad.anchor)
                            .for_each(|(d, x)| *d += g[0] * x)
                    });
                }
                Op::Sum(terms) => {
                    for t in terms {
                        send(*t, &mut |d| d[0] += g[0]);
                    }
                }
            }
        }
    }
}

fn matrix_shape(t: &Tensor) -> (usize, usize) {
    match t.shape.as_slice() {
        [r, c] => (*r, *c),
        s => panic!("expected a matrix parameter, got shape {s:?}"),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    assert_eq!(
        a.len(),
        b.len(),
        "elementwise op on lengths {} and {}",
        a.len(),
        b.len()
    );
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// One mixture component after mapping the raw outputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BivariateComponent {
    pub weight: f64,
    /// Mean offset from the anchor.
    pub offset: [f64; 2],
    pub sigma: [f64; 2],
    pub rho: f64,
}

pub const MIXTURE_PARAMS_PER_COMPONENT: usize = 6;

fn clamp_log_sigma(s: f64) -> (f64, bool) {
    let (lo, hi) = LOG_SIGMA_RANGE;
    (s.clamp(lo, hi), (lo..=hi).contains(&s))
}

fn map_rho(r: f64) -> (f64, f64) {
    let t = r.tanh();
    if t.abs() > RHO_MAX {
        (RHO_MAX.copysign(t), 0.0)
    } else {
        (t, 1.0 - t * t)
    }
}

/// Maps raw decoder outputs to mixture components.
pub fn mixture_components(raw: &[f64]) -> Vec<BivariateComponent> {
    assert!(
        !raw.is_empty() && raw.len().is_multiple_of(MIXTURE_PARAMS_PER_COMPONENT),
        "mixture needs a positive multiple of {MIXTURE_PARAMS_PER_COMPONENT} raw values"
    );
    let logits: Vec<f64> = raw
        .chunks_exact(MIXTURE_PARAMS_PER_COMPONENT)
        .map(|c| c[0])
        .collect();
    let weights = softmax(&logits);
    raw.chunks_exact(MIXTURE_PARAMS_PER_COMPONENT)
        .zip(weights)
        .map(|(c, weight)| BivariateComponent {
            weight,
            offset: [c[1], c[2]],
            sigma: [clamp_log_sigma(c[3]).0.exp(), clamp_log_sigma(c[4]).0.exp()],
            rho: map_rho(c[5]).0,
        })
        .collect()
}

struct NllGrad {
    params: Vec<f64>,
    anchor: [f64; 2],
}

fn mixture_nll(
    raw: &[f64],
    anchor: &[f64],
    target: [f64; 2],
    want_grad: bool,
) -> (f64, Option<NllGrad>) {
    assert_eq!(anchor.len(), 2, "anchor must be a 2-D position");
    let comps = mixture_components(raw);
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();

    struct Terms {
        log_joint: f64,
        dx: f64,
        dy: f64,
        z: f64,
        one_m_r2: f64,
    }
    let terms: Vec<Terms> = raw
        .chunks_exact(MIXTURE_PARAMS_PER_COMPONENT)
        .zip(&comps)
        .map(|(c, comp)| {
            let (sx, sy) = (clamp_log_sigma(c[3]).0, clamp_log_sigma(c[4]).0);
            let dx = (target[0] - anchor[0] - comp.offset[0]) / comp.sigma[0];
            let dy = (target[1] - anchor[1] - comp.offset[1]) / comp.sigma[1];
            let rho = comp.rho;
            let one_m_r2 = 1.0 - rho * rho;
            let z = dx * dx + dy * dy - 2.0 * rho * dx * dy;
            let log_pdf = -ln_2pi - sx - sy - 0.5 * one_m_r2.ln() - 0.5 * z / one_m_r2;
            Terms {
                log_joint: comp.weight.ln() + log_pdf,
                dx,
                dy,
                z,
                one_m_r2,
            }
        })
        .collect();

    let max = terms
        .iter()
        .map(|t| t.log_joint)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t.log_joint - max).exp()).sum();
    let nll = -(max + sum.ln());
    if !want_grad {
        return (nll, None);
    }

    let mut params = vec![0.0; raw.len()];
    let mut d_anchor = [0.0; 2];
    for (l, ((t, comp), c)) in terms
        .iter()
        .zip(&comps)
        .zip(raw.chunks_exact(MIXTURE_PARAMS_PER_COMPONENT))
        .enumerate()
    {
        let gamma = (t.log_joint - max).exp() / sum;
        let g =
            &mut params[l * MIXTURE_PARAMS_PER_COMPONENT..(l + 1) * MIXTURE_PARAMS_PER_COMPONENT];
        let (rho, k) = (comp.rho, t.one_m_r2);
        g[0] = comp.weight - gamma;
        // d log N / d mean, negated by the NLL and weighted by responsibility.
        let dmx = (t.dx - rho * t.dy) / (comp.sigma[0] * k);
        let dmy = (t.dy - rho * t.dx) / (comp.sigma[1] * k);
        g[1] = -gamma * dmx;
        g[2] = -gamma * dmy;
        d_anchor[0] -= gamma * dmx;
        d_anchor[1] -= gamma * dmy;
        if clamp_log_sigma(c[3]).1 {
            g[3] = -gamma * (-1.0 + (t.dx * t.dx - rho * t.dx * t.dy) / k);
        }
        if clamp_log_sigma(c[4]).1 {
            g[4] = -gamma * (-1.0 + (t.dy * t.dy - rho * t.dx * t.dy) / k);
        }
        let dlog_drho = rho / k + t.dx * t.dy / k - rho * t.z / (k * k);
        g[5] = -gamma * dlog_drho * map_rho(c[5]).1;
    }
    (
        nll,
        Some(NllGrad {
            params,
            anchor: d_anchor,
        }),
    )
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::numerics::{mixture_log_pdf, GaussianMixture, GaussianNd, Matrix, Rng, Vector};

    /// Central finite differences over every parameter value.
    pub(crate) fn check_gradients(store: &mut ParamStore, build: impl Fn(&mut Tape) -> Var) {
        let report = crate::neural::gradient_check(store, 1e-5, build);
        assert!(
            report.max_relative_error <= 1e-4,
            "{}[{}]: analytic {:e} vs numeric {:e} (rel {:e})",
            report.parameter,
            report.index,
            report.analytic,
            report.numeric,
            report.max_relative_error
        );
    }

    fn random(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.normal(0.0, scale)).collect()
    }

    #[test]
    fn elementwise_and_structural_ops() {
        let mut rng = Rng::new(4);
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::new(vec![5], random(&mut rng, 5, 1.0)));
        let b = store.add("b", Tensor::new(vec![5], random(&mut rng, 5, 1.0)));
        let w = store.add("w", Tensor::new(vec![3, 10], random(&mut rng, 30, 0.5)));
        let bias = store.add("bias", Tensor::new(vec![3], random(&mut rng, 3, 0.5)));
        check_gradients(&mut store, |t| {
            let (a, b) = (t.param(a), t.param(b));
            let s = t.sigmoid(a);
            let th = t.tanh(b);
            let r = t.relu(a);
            let m = t.mul(s, th);
            let sum = t.add(m, r);
            let sc = t.scale(sum, -1.7);
            let cat = t.concat(&[sc, th]);
            let y = t.matvec(w, cat);
            let y = t.add_param(y, bias);
            let head = t.slice(y, 1, 2);
            let sq = t.mul(head, head);
            let tail = t.slice(sq, 0, 1);
            let p = t.softmax(y);
            let ce = t.cross_entropy(p, &[0.0, 1.0, 0.0]);
            let mse = t.mse(y, &[0.1, -0.2, 0.3]);
            t.sum(&[tail, ce, mse])
        });
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[1f64.ln(), 3f64.ln()]);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        let base = softmax(&[0.3, -1.2, 2.0]);
        let shifted = softmax(&[100.3, 98.8, 102.0]);
        for (x, y) in base.iter().zip(&shifted) {
            assert!((x - y).abs() < 1e-12);
        }
        let extreme = softmax(&[1000.0, -1000.0]);
        assert!(extreme.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn cross_entropy_examples() {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let p = t.input(vec![0.0, 1.0]);
        let ce = t.cross_entropy(p, &[0.0, 1.0]);
        assert!(t.scalar(ce).abs() < 1e-11);
        let u = t.input(vec![0.5, 0.5]);
        let ce = t.cross_entropy(u, &[1.0, 0.0]);
        assert!((t.scalar(ce) - std::f64::consts::LN_2).abs() < 1e-11);
    }

    #[test]
    fn cross_entropy_gradient_through_softmax_is_probs_minus_target() {
        let mut store = ParamStore::new();
        let logits = store.add("logits", Tensor::new(vec![3], vec![0.4, -1.1, 0.9]));
        let target = [0.0, 0.0, 1.0];
        let mut grads = store.zero_grads();
        let mut t = Tape::new(&store);
        let l = t.param(logits);
        let p = t.softmax(l);
        let ce = t.cross_entropy(p, &target);
        t.backward(ce, &mut grads);
        let probs = softmax(&[0.4, -1.1, 0.9]);
        for k in 0..3 {
            assert!((grads.get(logits)[k] - (probs[k] - target[k])).abs() < 1e-10);
        }
        check_gradients(&mut store, |t| {
            let l = t.param(logits);
            let p = t.softmax(l);
            t.cross_entropy(p, &target)
        });
    }

    #[test]
    fn nll_at_the_peak_of_a_unit_gaussian() {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let params = t.input(vec![0.0, 0.3, -0.2, 0.0, 0.0, 0.0]);
        let anchor = t.input(vec![1.0, 2.0]);
        let nll = t.mixture_nll(params, anchor, [1.3, 1.8]);
        assert!((t.scalar(nll) - (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn nll_is_translation_invariant() {
        let mut rng = Rng::new(12);
        let raw = random(&mut rng, 12, 0.5);
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let p = t.input(raw);
        let a0 = t.input(vec![0.2, -0.4]);
        let a1 = t.input(vec![0.2 + 3.5, -0.4 - 1.25]);
        let n0 = t.mixture_nll(p, a0, [0.5, 0.1]);
        let n1 = t.mixture_nll(p, a1, [0.5 + 3.5, 0.1 - 1.25]);
        assert!((t.scalar(n0) - t.scalar(n1)).abs() < 1e-9);
    }

    #[test]
    fn nll_matches_the_mixture_density_oracle() {
        let mut rng = Rng::new(13);
        for _ in 0..20 {
            let raw = random(&mut rng, 12, 0.6);
            let anchor = [rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)];
            let target = [
                anchor[0] + rng.normal(0.0, 1.0),
                anchor[1] + rng.normal(0.0, 1.0),
            ];
            let comps = mixture_components(&raw);
            let gaussians = comps
                .iter()
                .map(|c| {
                    let (sx, sy) = (c.sigma[0], c.sigma[1]);
                    let cov = Matrix::from_rows(
                        2,
                        2,
                        &[sx * sx, c.rho * sx * sy, c.rho * sx * sy, sy * sy],
                    );
                    GaussianNd::new(
                        Vector::from_slice(&[anchor[0] + c.offset[0], anchor[1] + c.offset[1]]),
                        cov,
                    )
                })
                .collect();
            let mix =
                GaussianMixture::new(comps.iter().map(|c| c.weight).collect(), gaussians).unwrap();
            let oracle = -mixture_log_pdf(&Vector::from_slice(&target), &mix).unwrap();
            let (nll, _) = mixture_nll(&raw, &anchor, target, false);
            assert!((nll - oracle).abs() < 1e-9, "{nll} vs {oracle}");
        }
    }

    #[test]
    fn nll_gradients() {
        let mut rng = Rng::new(14);
        for l in [1, 3] {
            let mut store = ParamStore::new();
            let raw = store.add(
                "raw",
                Tensor::new(vec![6 * l], random(&mut rng, 6 * l, 0.5)),
            );
            let anchor = store.add("anchor", Tensor::new(vec![2], random(&mut rng, 2, 0.5)));
            let target = [rng.normal(0.0, 0.7), rng.normal(0.0, 0.7)];
            check_gradients(&mut store, |t| {
                let (p, a) = (t.param(raw), t.param(anchor));
                t.mixture_nll(p, a, target)
            });
        }
    }

    #[test]
    fn clamped_correlation_has_no_gradient() {
        let (nll, g) = mixture_nll(
            &[0.0, 0.0, 0.0, 0.0, 0.0, 8.0],
            &[0.0, 0.0],
            [0.3, -0.3],
            true,
        );
        assert!(nll.is_finite());
        assert_eq!(g.unwrap().params[5], 0.0);
        assert_eq!(
            mixture_components(&[0.0, 0.0, 0.0, 0.0, 0.0, -8.0])[0].rho,
            -RHO_MAX
        );
    }

    #[test]
    fn detach_blocks_gradients() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::new(vec![2], vec![0.5, -1.0]));
        let mut grads = store.zero_grads();
        let mut t = Tape::new(&store);
        let p = t.param(a);
        let d = t.detach(p);
        assert_eq!(t.value(d), t.value(p));
        let y = t.mul(p, d);
        let loss = t.mse(y, &[0.0, 0.0]);
        t.backward(loss, &mut grads);
        // d/dp mean((p * c)^2) with c held at p: p * c^2.
        assert_eq!(grads.get(a), &[0.5 * 0.25, -1.0]);
    }

    #[test]
    fn gradients_accumulate_across_tapes() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::new(vec![1, 2], vec![1.0, -2.0]));
        let mut grads = store.zero_grads();
        for _ in 0..3 {
            let mut t = Tape::new(&store);
            let x = t.input(vec![0.5, 1.5]);
            let y = t.matvec(w, x);
            let y = t.slice(y, 0, 1);
            t.backward(y, &mut grads);
        }
        assert_eq!(grads.get(w), &[1.5, 4.5]);
        assert!((grads.global_norm() - (1.5f64.powi(2) + 4.5f64.powi(2)).sqrt()).abs() < 1e-15);
    }
}
