use super::Tensor;

/// A fixed, ordered collection of named parameter tensors.
///
/// Gradient containers use the same type as the parameters they describe, so
/// optimizers, checkpoints and gradient checks can walk both in lockstep.
pub trait Parameters: Clone {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor));

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |_, t| t.fill(0.0));
        z
    }

    fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |name, _| out.push(name.to_string()));
        out
    }

    fn tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit(&mut |name, t| out.push((name.to_string(), t.clone())));
        out
    }

    fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    /// `self += scale * other`, tensor by tensor.
    fn accumulate(&mut self, other: &Self, scale: f64) {
        let mut theirs = Vec::new();
        other.visit(&mut |_, t| theirs.push(t.data().to_vec()));
        let mut i = 0;
        self.visit_mut(&mut |_, t| {
            for (a, b) in t.data_mut().iter_mut().zip(&theirs[i]) {
                *a += scale * b;
            }
            i += 1;
        });
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, t| ok &= t.is_finite());
        ok
    }

    /// Bit pattern of every value, for exact-equality checks.
    fn bit_fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        self.visit(&mut |name, t| {
            for b in name.bytes() {
                h = (h ^ u64::from(b)).wrapping_mul(0x100_0000_01B3);
            }
            for v in t.data() {
                h = (h ^ v.to_bits()).wrapping_mul(0x100_0000_01B3);
            }
        });
        h
    }
}

/// Visit `child` with every name prefixed by `prefix.`.
pub fn visit_prefixed<P: Parameters>(
    child: &P,
    prefix: &str,
    f: &mut dyn FnMut(&str, &Tensor),
) {
    child.visit(&mut |name, t| f(&format!("{prefix}.{name}"), t));
}

pub fn visit_prefixed_mut<P: Parameters>(
    child: &mut P,
    prefix: &str,
    f: &mut dyn FnMut(&str, &mut Tensor),
) {
    child.visit_mut(&mut |name, t| f(&format!("{prefix}.{name}"), t));
}

/// A plain list of named tensors; handy for tests and ad-hoc checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensors(pub Vec<(String, Tensor)>);

impl Parameters for NamedTensors {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for (name, t) in &self.0 {
            f(name, t);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (name, t) in &mut self.0 {
            f(name, t);
        }
    }
}
