use std::collections::VecDeque;

use crate::model::TaskId;

/// FIFO memory of recently evicted tasks.
///
/// A resident task may not be re-inserted. When the list is full the oldest
/// entry is released first. A capacity of zero disables the list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabuList {
    capacity: usize,
    queue: VecDeque<TaskId>,
    resident: Vec<u32>,
}

impl TabuList {
    pub fn new(capacity: usize, n_tasks: usize) -> Self {
        Self {
            capacity,
            queue: VecDeque::with_capacity(capacity),
            resident: vec![0; n_tasks],
        }
    }

    /// A list that never holds anything.
    pub fn disabled(n_tasks: usize) -> Self {
        Self::new(0, n_tasks)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    #[inline]
    pub fn contains(&self, task: TaskId) -> bool {
        self.resident.get(task.index()).is_some_and(|&c| c > 0)
    }

    /// Adds a task, releasing the oldest resident when full. Returns the
    /// released task, if any.
    pub fn push(&mut self, task: TaskId) -> Option<TaskId> {
        if self.capacity == 0 {
            return None;
        }
        let released = if self.queue.len() == self.capacity {
            self.queue.pop_front().inspect(|old| self.resident[old.index()] -= 1)
        } else {
            None
        };
        self.queue.push_back(task);
        self.resident[task.index()] += 1;
        released
    }

    pub fn is_full(&self) -> bool {
        self.capacity > 0 && self.queue.len() >= self.capacity
    }

    /// Frees the oldest resident if the list is full.
    pub fn release_oldest_if_full(&mut self) -> Option<TaskId> {
        if !self.is_full() {
            return None;
        }
        self.queue.pop_front().inspect(|old| self.resident[old.index()] -= 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.queue.iter().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn releases_oldest_first() {
        let mut tabu = TabuList::new(2, 5);
        assert_eq!(tabu.push(TaskId(3)), None);
        assert_eq!(tabu.push(TaskId(1)), None);
        assert!(tabu.contains(TaskId(3)));
        assert_eq!(tabu.push(TaskId(4)), Some(TaskId(3)));
        assert!(!tabu.contains(TaskId(3)));
        assert_eq!(tabu.iter().collect::<Vec<_>>(), vec![TaskId(1), TaskId(4)]);
        assert_eq!(tabu.len(), 2);
    }

    #[test]
    fn release_only_when_full() {
        let mut tabu = TabuList::new(2, 5);
        tabu.push(TaskId(0));
        assert_eq!(tabu.release_oldest_if_full(), None);
        tabu.push(TaskId(1));
        assert!(tabu.is_full());
        assert_eq!(tabu.release_oldest_if_full(), Some(TaskId(0)));
        assert_eq!(tabu.iter().collect::<Vec<_>>(), vec![TaskId(1)]);
    }

    #[test]
    fn zero_capacity_holds_nothing() {
        let mut tabu = TabuList::disabled(3);
        assert_eq!(tabu.push(TaskId(0)), None);
        assert!(!tabu.contains(TaskId(0)));
        assert!(tabu.is_empty());
    }
}
