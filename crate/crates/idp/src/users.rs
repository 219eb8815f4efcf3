//! User accounts, password verification and login throttling.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use pbkdf2::pbkdf2_hmac;
use rand::RngCore;
use sha2::Sha256;

pub const USER_ID_BYTES: usize = 16;
const SALT_BYTES: usize = 16;

#[derive(Debug, Clone)]
pub struct UserRecord {
    pub username: String,
    /// Random, never shown to relying parties.
    pub user_id: [u8; USER_ID_BYTES],
    password_salt: [u8; SALT_BYTES],
    password_hash: [u8; 32],
    pub ppid_salt: [u8; 32],
    pub attributes: BTreeMap<String, String>,
}

fn hash_password(password: &str, salt: &[u8], rounds: u32) -> [u8; 32] {
    let mut out = [0u8; 32];
    pbkdf2_hmac::<Sha256>(password.as_bytes(), salt, rounds, &mut out);
    out
}

impl UserRecord {
    pub fn new(username: &str, password: &str, attributes: BTreeMap<String, String>, rounds: u32) -> Self {
        let mut rng = rand::rngs::OsRng;
        let mut user_id = [0u8; USER_ID_BYTES];
        let mut password_salt = [0u8; SALT_BYTES];
        let mut ppid_salt = [0u8; 32];
        rng.fill_bytes(&mut user_id);
        rng.fill_bytes(&mut password_salt);
        rng.fill_bytes(&mut ppid_salt);
        Self {
            username: username.to_string(),
            user_id,
            password_hash: hash_password(password, &password_salt, rounds),
            password_salt,
            ppid_salt,
            attributes,
        }
    }

    pub fn check_password(&self, password: &str, rounds: u32) -> bool {
        let candidate = hash_password(password, &self.password_salt, rounds);
        candidate.iter().zip(&self.password_hash).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
    }
}

/// Counts failed logins per account inside a sliding window.
pub struct LoginThrottle {
    max_failures: usize,
    window: Duration,
    failures: HashMap<String, Vec<Instant>>,
}

impl LoginThrottle {
    pub fn new(max_failures: usize, window: Duration) -> Self {
        Self {
            max_failures,
            window,
            failures: HashMap::new(),
        }
    }

    fn prune(&mut self, key: &str, now: Instant) -> usize {
        let window = self.window;
        let list = self.failures.entry(key.to_string()).or_default();
        list.retain(|t| now.duration_since(*t) < window);
        list.len()
    }

    pub fn is_throttled(&mut self, key: &str, now: Instant) -> bool {
        self.prune(key, now) >= self.max_failures
    }

    pub fn record_failure(&mut self, key: &str, now: Instant) {
        self.prune(key, now);
        self.failures.entry(key.to_string()).or_default().push(now);
    }

    pub fn clear(&mut self, key: &str) {
        self.failures.remove(key);
    }
}
