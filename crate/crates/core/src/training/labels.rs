use std::cell::RefCell;
use std::collections::BTreeSet;

use crate::data::observations::{FieldObservation, Task};

/// Read access to labeled points. Finetuning goes through this trait so
/// label reads can be audited.
pub trait LabelStore {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Planar location; reading it does not count as a label access.
    fn location(&self, index: usize) -> (f64, f64);

    fn label(&self, index: usize, task: Task) -> Option<usize>;
}

impl LabelStore for [FieldObservation] {
    fn len(&self) -> usize {
        <[FieldObservation]>::len(self)
    }

    fn location(&self, index: usize) -> (f64, f64) {
        (self[index].x, self[index].y)
    }

    fn label(&self, index: usize, task: Task) -> Option<usize> {
        self[index].label(task)
    }
}

impl LabelStore for Vec<FieldObservation> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn location(&self, index: usize) -> (f64, f64) {
        self.as_slice().location(index)
    }

    fn label(&self, index: usize, task: Task) -> Option<usize> {
        self.as_slice().label(index, task)
    }
}

/// Wraps a store and records every index whose label was read.
pub struct AccessLog<'a, S: LabelStore + ?Sized> {
    inner: &'a S,
    reads: RefCell<BTreeSet<usize>>,
}

impl<'a, S: LabelStore + ?Sized> AccessLog<'a, S> {
    pub fn new(inner: &'a S) -> Self {
        AccessLog {
            inner,
            reads: RefCell::new(BTreeSet::new()),
        }
    }

    pub fn reads(&self) -> BTreeSet<usize> {
        self.reads.borrow().clone()
    }
}

impl<S: LabelStore + ?Sized> LabelStore for AccessLog<'_, S> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn location(&self, index: usize) -> (f64, f64) {
        self.inner.location(index)
    }

    fn label(&self, index: usize, task: Task) -> Option<usize> {
        self.reads.borrow_mut().insert(index);
        self.inner.label(index, task)
    }
}
