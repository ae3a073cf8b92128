use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use std::collections::HashMap;

/// Handle to one tensor of a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learnable tensors, in creation order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T: Scalar = f32> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    fn insert(&mut self, name: String, value: Tensor<T>) -> Result<ParamId> {
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter path {name}")));
        }
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.values
    }

    /// Replaces the value at `name`, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let id = self
            .find(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
        if self.values[id.0].shape() != value.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter {name}: expected shape {:?}, got {:?}",
                self.values[id.0].shape(),
                value.shape()
            )));
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Records every parameter as a gradient-tracking leaf.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Params<'t, T> {
        Params {
            vars: self.values.iter().map(|v| tape.leaf(v.clone())).collect(),
        }
    }

    /// Records every parameter as a constant (no gradients).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape<T>) -> Params<'t, T> {
        Params {
            vars: self.values.iter().map(|v| tape.constant(v.clone())).collect(),
        }
    }

    /// Adds `N(0, std^2)` noise to every entry; used to move away from the
    /// zero-initialised identities when probing gradients.
    pub fn perturb(&mut self, rng: &mut ChaCha8Rng, std: f64) {
        let normal = Normal::new(0.0, std).unwrap();
        for v in &mut self.values {
            for x in v.data_mut() {
                *x = *x + T::from_f64(normal.sample(rng));
            }
        }
    }
}

/// Parameters recorded on one tape.
#[derive(Clone, Debug)]
pub struct Params<'t, T: Scalar> {
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Scalar> Params<'t, T> {
    pub fn from_vars(vars: Vec<Var<'t, T>>) -> Self {
        Self { vars }
    }

    pub fn get(&self, id: ParamId) -> Var<'t, T> {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var<'t, T>] {
        &self.vars
    }

    /// Gradients in store order; untouched parameters get zeros.
    pub fn grads(&self) -> Vec<Tensor<T>> {
        self.vars
            .iter()
            .map(|v| v.grad().unwrap_or_else(|| Tensor::zeros(&v.shape())))
            .collect()
    }
}

/// Weight initialisation schemes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Const(f64),
    Normal(f64),
    /// `U(-b, b)` with `b = 1/sqrt(fan_in)`.
    FanIn(usize),
    /// `N(0, 2/fan_in)`.
    He(usize),
}

/// Creates parameters under a dotted path prefix from a seeded stream.
pub struct Builder<'a, T: Scalar> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a, T: Scalar> Builder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            store,
            rng,
            prefix: String::new(),
        }
    }

    pub fn sub(&mut self, name: &str) -> Builder<'_, T> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        Builder {
            store: self.store,
            rng: self.rng,
            prefix,
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }

    fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        // draws happen in f64 so f32 and f64 stores built from one seed agree
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; shape.iter().product()],
            Init::Const(c) => vec![c; shape.iter().product()],
            Init::Normal(std) => {
                let d = Normal::new(0.0, std).unwrap();
                (0..shape.iter().product()).map(|_| d.sample(self.rng)).collect()
            }
            Init::FanIn(fan) => {
                let b = 1.0 / (fan.max(1) as f64).sqrt();
                let d = Uniform::new(-b, b).unwrap();
                (0..shape.iter().product()).map(|_| d.sample(self.rng)).collect()
            }
            Init::He(fan) => {
                let d = Normal::new(0.0, (2.0 / fan.max(1) as f64).sqrt()).unwrap();
                (0..shape.iter().product()).map(|_| d.sample(self.rng)).collect()
            }
        };
        let path = self.path(name);
        self.store.insert(path, Tensor::from_f64(shape, &data)?)
    }

    pub fn tensor(&mut self, name: &str, value: Tensor<f64>) -> Result<ParamId> {
        let path = self.path(name);
        self.store.insert(path, value.cast())
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn paths_and_duplicates() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = Builder::new(&mut store, &mut rng);
        let mut s = b.sub("enc");
        let id = s.sub("conv").param("w", &[2, 3], Init::FanIn(3)).unwrap();
        assert!(s.sub("conv").param("w", &[1], Init::Zeros).is_err());
        assert_eq!(store.name(id), "enc.conv.w");
        assert_eq!(store.find("enc.conv.w"), Some(id));
    }

    #[test]
    fn f32_and_f64_stores_agree() {
        let build = |seed| {
            let mut store = ParamStore::<f64>::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Builder::new(&mut store, &mut rng).param("w", &[4], Init::Normal(1.0)).unwrap();
            store
        };
        let a = build(3);
        let b = build(3);
        assert_eq!(a.values(), b.values());
        let f: ParamStore<f32> = a.cast();
        assert!((f.values()[0].data()[0] as f64 - a.values()[0].data()[0]).abs() < 1e-6);
    }
}
