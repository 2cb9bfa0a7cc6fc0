//! Dense tensors and a define-by-run reverse-mode tape.
//!
//! A [`Graph`] borrows the parameter store immutably for one forward and
//! backward pass; the optimizer updates parameters only between passes.

mod graph;
mod tensor;

use thiserror::Error;

pub use graph::{Gradients, Graph, ParamEntry, ParamId, ParamStore, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum AutogradError {
    #[error("shape {shape:?} needs a different number of values than {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: incompatible operand shapes {shapes:?}")]
    Shape {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{0}: produced a non-finite value")]
    NonFinite(&'static str),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn sigmoid_at_zero() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::scalar(0.0));
        let y = g.sigmoid(x).unwrap();
        assert_eq!(g.value(y).item(), 0.5);
        let grads = g.backward(y).unwrap();
        assert!(close(grads.wrt(x).item(), 0.25, 1e-15));
    }

    #[test]
    fn logsumexp_of_zeros() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::vector(vec![0.0, 0.0]));
        let y = g.logsumexp(x).unwrap();
        assert!(close(g.value(y).item(), std::f64::consts::LN_2, 1e-15));
    }

    #[test]
    fn matmul_identity() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let i = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let x = g.constant(Tensor::from_rows(&[vec![3.0, -1.0], vec![2.5, 7.0]]).unwrap());
        let y = g.matmul(i, x).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn product_rule() {
        let mut store = ParamStore::new();
        let px = store.add("x", Tensor::scalar(3.0));
        let py = store.add("y", Tensor::scalar(4.0));
        let unused = store.add("z", Tensor::vector(vec![1.0, 2.0]));
        let mut g = Graph::new(&store);
        let (x, y) = (g.param(px), g.param(py));
        let xy = g.mul(x, y).unwrap();
        let grads = g.backward(xy).unwrap();
        assert_eq!(grads.param(px, &store).item(), 4.0);
        assert_eq!(grads.param(py, &store).item(), 3.0);
        assert_eq!(grads.param(unused, &store), Tensor::zeros(&[2]));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            AutogradError::Shape {
                op: "matmul",
                shapes: vec![vec![2, 3], vec![2, 3]]
            }
        );
        assert!(err.to_string().contains("[2, 3]"));
        let v = g.constant(Tensor::zeros(&[2]));
        assert!(g.add(v, a).is_err());
        assert!(matches!(g.backward(a), Err(AutogradError::NonScalarLoss(_))));
    }

    #[test]
    fn bias_broadcast_only_on_rows() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let m = g.input(Tensor::zeros(&[3, 2]));
        let b = g.input(Tensor::vector(vec![1.0, 2.0]));
        let y = g.add(m, b).unwrap();
        assert_eq!(g.value(y).row(2), [1.0, 2.0]);
        let s = g.sum(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(b).data(), [3.0, 3.0]);
    }

    #[test]
    fn gradients_do_not_leak_between_passes() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::vector(vec![1.0, -2.0]));
        let run = |store: &ParamStore| {
            let mut g = Graph::new(store);
            let x = g.param(p);
            let y = g.mul(x, x).unwrap();
            let s = g.sum(y).unwrap();
            g.backward(s).unwrap().param(p, store)
        };
        assert_eq!(run(&store), run(&store));
    }

    #[test]
    fn non_finite_values_are_reported() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::scalar(f64::MAX));
        if cfg!(debug_assertions) {
            assert_eq!(g.scale(x, 10.0).unwrap_err(), AutogradError::NonFinite("scale"));
        }
    }
}
