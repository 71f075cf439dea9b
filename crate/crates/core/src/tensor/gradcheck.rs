//! Central finite differences for gradient verification.
//!
//! The numeric side never touches the tape's reverse pass, so it serves as an
//! independent oracle for every analytic gradient in the crate.

use super::{ParamId, ParamStore, Scalar};

/// d loss / d store[id][flat] by central differences at step `h`.
///
/// `loss` must be a pure function of the store contents.
pub fn central_diff<T: Scalar>(
    store: &mut ParamStore<T>,
    id: ParamId,
    flat: usize,
    h: f64,
    mut loss: impl FnMut(&ParamStore<T>) -> f64,
) -> f64 {
    let original = {
        let v = store.value_mut(id);
        let slot = v.as_slice_mut().expect("contiguous parameter");
        let orig = slot[flat];
        slot[flat] = orig + T::from_f64(h);
        orig
    };
    let plus = loss(store);
    {
        let v = store.value_mut(id);
        let slot = v.as_slice_mut().expect("contiguous parameter");
        slot[flat] = original - T::from_f64(h);
    }
    let minus = loss(store);
    {
        let v = store.value_mut(id);
        let slot = v.as_slice_mut().expect("contiguous parameter");
        slot[flat] = original;
    }
    (plus - minus) / (2.0 * h)
}

/// Relative error with a floor to avoid blowing up near zero.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-8);
    (a - b).abs() / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn central_diff_matches_analytic_quadratic() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("x", arr2(&[[3.0, -2.0]]));
        // f = x0^2 + 4 x1
        let f = |s: &ParamStore<f64>| {
            let v = s.value(s.id_of("x").unwrap());
            v[[0, 0]] * v[[0, 0]] + 4.0 * v[[0, 1]]
        };
        let d0 = central_diff(&mut store, id, 0, 1e-5, f);
        let d1 = central_diff(&mut store, id, 1, 1e-5, f);
        assert!(relative_error(d0, 6.0) < 1e-8);
        assert!(relative_error(d1, 4.0) < 1e-8);
        // store restored
        assert_eq!(store.value(id)[[0, 0]], 3.0);
    }
}
