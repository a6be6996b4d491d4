use crate::numkit::Rng;
use crate::problems::Sample;
use crate::simdata::Dgp;
use crate::Real;

/// Lazily generated i.i.d. samples from a [`Dgp`]. `None` length means unbounded.
#[derive(Clone, Debug)]
pub struct SampleStream<T> {
    dgp: Dgp<T>,
    rng: Rng,
    remaining: Option<usize>,
    consumed: usize,
}

impl<T: Real> SampleStream<T> {
    pub fn new(dgp: Dgp<T>, rng: Rng, len: Option<usize>) -> Self {
        Self {
            dgp,
            rng,
            remaining: len,
            consumed: 0,
        }
    }

    pub fn unbounded(dgp: Dgp<T>, rng: Rng) -> Self {
        Self::new(dgp, rng, None)
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn dgp(&self) -> &Dgp<T> {
        &self.dgp
    }
}

impl<T: Real> Iterator for SampleStream<T> {
    type Item = Sample<T>;

    fn next(&mut self) -> Option<Sample<T>> {
        if let Some(r) = self.remaining.as_mut() {
            if *r == 0 {
                return None;
            }
            *r -= 1;
        }
        self.consumed += 1;
        Some(self.dgp.draw(&mut self.rng))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        match self.remaining {
            Some(r) => (r, Some(r)),
            None => (usize::MAX, None),
        }
    }
}

/// Requested lengths of the three streams.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StreamCounts {
    pub target: usize,
    pub nuisance: usize,
    pub eval: usize,
}

#[derive(Clone, Debug)]
pub struct StreamSet<T> {
    pub target: SampleStream<T>,
    pub nuisance: SampleStream<T>,
    pub eval: SampleStream<T>,
}

/// Three streams backed by independent child generators of `rng`.
pub fn split_streams<T: Real>(rng: &Rng, dgp: &Dgp<T>, counts: StreamCounts) -> StreamSet<T> {
    let mk = |label: &str, n: usize| SampleStream::new(dgp.clone(), rng.child_named(label), Some(n));
    StreamSet {
        target: mk("target", counts.target),
        nuisance: mk("nuisance", counts.nuisance),
        eval: mk("eval", counts.eval),
    }
}
