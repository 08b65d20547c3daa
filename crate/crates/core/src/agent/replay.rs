use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::env::StateMatrix;
use crate::Rng;

/// One step of experience. Rewards are stored after shaping.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateMatrix,
    pub action: usize,
    pub reward: f64,
    pub next: StateMatrix,
    pub terminal: bool,
    /// The episode's terminal reward came from the reward model.
    pub imagined: bool,
}

/// Binary tree whose internal nodes hold the sum of their children.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    tree: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self { leaves, tree: vec![0.0; 2 * leaves] }
    }

    pub fn capacity(&self) -> usize {
        self.leaves
    }

    pub fn total(&self) -> f64 {
        self.tree[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.tree[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let mut node = self.leaves + i;
        self.tree[node] = value;
        while node > 1 {
            node /= 2;
            self.tree[node] = self.tree[2 * node] + self.tree[2 * node + 1];
        }
    }

    /// Leaf whose cumulative-sum interval contains `mass`.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = 2 * node;
            if mass < self.tree[left] || self.tree[left + 1] <= 0.0 {
                node = left;
            } else {
                mass -= self.tree[left];
                node = left + 1;
            }
        }
        node - self.leaves
    }

    /// Same leaves in a tree with room for `capacity`.
    fn grown(&self, capacity: usize) -> Self {
        let mut t = Self::new(capacity);
        for i in 0..self.leaves {
            t.tree[t.leaves + i] = self.get(i);
        }
        for node in (1..t.leaves).rev() {
            t.tree[node] = t.tree[2 * node] + t.tree[2 * node + 1];
        }
        t
    }
}

/// A sampled transition with its importance weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampled {
    pub index: usize,
    pub weight: f64,
}

/// Proportional prioritized replay over a ring buffer.
#[derive(Debug, Clone)]
pub struct PrioritizedReplay {
    capacity: usize,
    items: Vec<Transition>,
    priorities: SumTree,
    next: usize,
    max_priority: f64,
    alpha: f64,
    priority_eps: f64,
}

impl PrioritizedReplay {
    pub fn new(capacity: usize, alpha: f64, priority_eps: f64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            priorities: SumTree::new(capacity.min(1024)),
            next: 0,
            max_priority: 1.0,
            alpha,
            priority_eps,
        }
    }

    /// Rebuilds a buffer from saved parts. `leaves` are the stored
    /// `priority^alpha` values, one per item, and `tree_capacity` the
    /// sum-tree width at the time of saving.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        capacity: usize,
        alpha: f64,
        priority_eps: f64,
        items: Vec<Transition>,
        leaves: &[f64],
        tree_capacity: usize,
        cursor: usize,
        max_priority: f64,
    ) -> Option<Self> {
        if capacity == 0
            || items.len() > capacity
            || leaves.len() != items.len()
            || tree_capacity < items.len().min(capacity)
            || cursor >= capacity
        {
            return None;
        }
        let mut priorities = SumTree::new(tree_capacity);
        for (i, &l) in leaves.iter().enumerate() {
            priorities.set(i, l);
        }
        Some(Self { capacity, items, priorities, next: cursor, max_priority, alpha, priority_eps })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn priority_eps(&self) -> f64 {
        self.priority_eps
    }

    /// Stored `priority^alpha` of slot `i`.
    pub fn leaf(&self, i: usize) -> f64 {
        self.priorities.get(i)
    }

    pub fn tree_capacity(&self) -> usize {
        self.priorities.capacity()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Slot the next push overwrites once the buffer is full.
    pub fn cursor(&self) -> usize {
        self.next
    }

    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    /// Raw priority (before the `alpha` exponent) of slot `i`.
    pub fn priority(&self, i: usize) -> f64 {
        libm::pow(self.priorities.get(i), 1.0 / self.alpha)
    }

    /// Adds a transition at the current maximum priority, evicting the
    /// oldest one when full.
    pub fn push(&mut self, t: Transition) {
        let p = self.max_priority;
        self.push_with_priority(t, p);
    }

    pub fn push_with_priority(&mut self, t: Transition, priority: f64) {
        let slot = if self.items.len() < self.capacity {
            self.items.push(t);
            self.items.len() - 1
        } else {
            self.items[self.next] = t;
            self.next
        };
        self.next = (slot + 1) % self.capacity;
        if slot >= self.priorities.capacity() {
            self.priorities = self.priorities.grown((2 * self.priorities.capacity()).min(self.capacity));
        }
        self.max_priority = self.max_priority.max(priority);
        self.priorities.set(slot, libm::pow(priority, self.alpha));
    }

    /// Sets slot `i`'s priority to `|td_error| + ε`.
    pub fn update_priority(&mut self, i: usize, td_error: f64) {
        let p = td_error.abs() + self.priority_eps;
        self.max_priority = self.max_priority.max(p);
        self.priorities.set(i, libm::pow(p, self.alpha));
    }

    /// Probability of drawing slot `i`.
    pub fn probability(&self, i: usize) -> f64 {
        self.priorities.get(i) / self.priorities.total()
    }

    /// Stratified proportional sample with importance weights
    /// `(len · P(i))^(-beta)` normalized by the largest weight in the batch.
    pub fn sample(&self, batch: usize, beta: f64, rng: &mut Rng) -> Vec<Sampled> {
        if self.items.is_empty() || batch == 0 {
            return Vec::new();
        }
        let total = self.priorities.total();
        let segment = total / batch as f64;
        let mut out: Vec<Sampled> = (0..batch)
            .map(|k| {
                let mass = segment * (k as f64 + rng.gen::<f64>());
                let index = self.priorities.find(mass.min(total)).min(self.items.len() - 1);
                let prob = self.probability(index);
                let weight = libm::pow(self.items.len() as f64 * prob, -beta);
                Sampled { index, weight }
            })
            .collect();
        let max_w = out.iter().map(|s| s.weight).fold(0.0, f64::max);
        if max_w > 0.0 && max_w.is_finite() {
            out.iter_mut().for_each(|s| s.weight /= max_w);
        } else {
            out.iter_mut().for_each(|s| s.weight = 1.0);
        }
        out
    }
}
