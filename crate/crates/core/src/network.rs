//! Directed follow graph.
//!
//! An edge `(u, v)` means user `u` follows user `v`, i.e. `v` is in the
//! neighbourhood `N(u)` whose messages move `u`'s opinion and intensity.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    followees: Vec<Vec<usize>>,
    followers: Vec<Vec<usize>>,
    n_edges: usize,
}

impl Network {
    /// Builds a network from `(follower, followee)` pairs. Duplicate pairs
    /// are merged; self-follows and ids outside `[0, n_users)` are rejected.
    pub fn new(n_users: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n_users == 0 {
            return Err(Error::invalid("network must have at least one user"));
        }
        let mut followees = vec![Vec::new(); n_users];
        for (u, v) in edges {
            if u >= n_users {
                return Err(Error::UnknownUser { user: u, n_users });
            }
            if v >= n_users {
                return Err(Error::UnknownUser { user: v, n_users });
            }
            if u == v {
                return Err(Error::invalid(format!("self-follow edge ({u}, {u})")));
            }
            followees[u].push(v);
        }
        let mut followers = vec![Vec::new(); n_users];
        let mut n_edges = 0;
        for (u, list) in followees.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            n_edges += list.len();
            for &v in list.iter() {
                followers[v].push(u);
            }
        }
        Ok(Self {
            followees,
            followers,
            n_edges,
        })
    }

    /// A network with no edges.
    pub fn empty(n_users: usize) -> Result<Self> {
        Self::new(n_users, std::iter::empty())
    }

    pub fn n_users(&self) -> usize {
        self.followees.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// `N(u)`: users that `u` follows, sorted.
    pub fn followees(&self, u: usize) -> &[usize] {
        &self.followees[u]
    }

    /// Users that follow `v`, sorted. These are the users whose state moves
    /// when `v` posts.
    pub fn followers(&self, v: usize) -> &[usize] {
        &self.followers[v]
    }

    pub fn follows(&self, u: usize, v: usize) -> bool {
        self.followees
            .get(u)
            .is_some_and(|list| list.binary_search(&v).is_ok())
    }

    pub fn max_in_degree(&self) -> usize {
        self.followees.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// All `(follower, followee)` pairs in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.followees
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().map(move |&v| (u, v)))
    }

    pub(crate) fn check_user(&self, u: usize) -> Result<()> {
        if u < self.n_users() {
            Ok(())
        } else {
            Err(Error::UnknownUser {
                user: u,
                n_users: self.n_users(),
            })
        }
    }
}
