use super::tape::{Gradients, ParamId, ParamStore, Tape, Var};

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    /// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.
    pub max_relative_error: f64,
    pub parameter: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub values_checked: usize,
}

/// Compares `analytic` with central differences of `eval` over every
/// parameter value, perturbing `store` in place and restoring it.
pub fn finite_difference_check(
    store: &mut ParamStore,
    analytic: &Gradients,
    step: f64,
    mut eval: impl FnMut(&ParamStore) -> f64,
) -> GradientCheck {
    let mut worst = GradientCheck {
        max_relative_error: 0.0,
        parameter: String::new(),
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
        values_checked: 0,
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for k in 0..store.get(id).len() {
            let orig = store.get(id).values[k];
            store.get_mut(id).values[k] = orig + step;
            let up = eval(store);
            store.get_mut(id).values[k] = orig - step;
            let down = eval(store);
            store.get_mut(id).values[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.get(id)[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst.values_checked += 1;
            if !(rel <= worst.max_relative_error) {
                worst = GradientCheck {
                    max_relative_error: rel,
                    parameter: store.name(id).to_string(),
                    index: k,
                    analytic: a,
                    numeric,
                    values_checked: worst.values_checked,
                };
            }
        }
    }
    worst
}

/// Finite-difference check of the scalar built by `build`.
pub fn gradient_check(
    store: &mut ParamStore,
    step: f64,
    build: impl Fn(&mut Tape) -> Var,
) -> GradientCheck {
    let mut grads = store.zero_grads();
    {
        let mut tape = Tape::new(store);
        let out = build(&mut tape);
        tape.backward(out, &mut grads);
    }
    finite_difference_check(store, &grads, step, |s| {
        let mut t = Tape::new(s);
        let out = build(&mut t);
        t.scalar(out)
    })
}
