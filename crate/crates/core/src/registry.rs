//! Name-keyed factories for interchangeable strategies (losses, kernels,
//! metrics, case classifiers), selected at runtime from configuration.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

type Factory<S, C> = Box<dyn Fn(&C) -> Box<S> + Send + Sync>;

pub struct Registry<S: ?Sized, C = ()> {
    kind: &'static str,
    factories: BTreeMap<String, Factory<S, C>>,
}

impl<S: ?Sized, C> Registry<S, C> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            factories: BTreeMap::new(),
        }
    }

    /// Adds a factory. Registering an existing name is an error.
    pub fn register<F>(&mut self, name: &str, factory: F) -> Result<()>
    where
        F: Fn(&C) -> Box<S> + Send + Sync + 'static,
    {
        if self.factories.contains_key(name) {
            return Err(Error::Config(format!("{} `{name}` registered twice", self.kind)));
        }
        self.factories.insert(name.to_string(), Box::new(factory));
        Ok(())
    }

    pub fn create(&self, name: &str, config: &C) -> Result<Box<S>> {
        self.factories
            .get(name)
            .map(|f| f(config))
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.factories.keys().cloned().collect()
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}
