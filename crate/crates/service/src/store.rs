//! In-memory session store with optional canonical-JSON snapshots on disk.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::http::StatusCode;
use modalsim_core::policy::GameState;
use modalsim_core::snapshot::{read_canonical_json, write_canonical_json};
use modalsim_core::Population;
use uuid::Uuid;

use crate::error::ApiError;

/// A game and the population it plays on. Turns are serialized by the mutex.
#[derive(Clone)]
pub struct GameSlot {
    pub population_id: String,
    pub state: Arc<tokio::sync::Mutex<GameState>>,
}

/// Cached response of a request carrying an `Idempotency-Key`.
pub type Replay = (StatusCode, serde_json::Value);

#[derive(Default)]
pub struct SessionStore {
    populations: RwLock<HashMap<String, Arc<Population>>>,
    games: RwLock<HashMap<String, GameSlot>>,
    replays: Mutex<HashMap<String, Replay>>,
    snapshot_dir: Option<PathBuf>,
}

pub fn new_id() -> String {
    Uuid::new_v4().to_string()
}

impl SessionStore {
    pub fn new(snapshot_dir: Option<PathBuf>) -> Self {
        SessionStore { snapshot_dir, ..Default::default() }
    }

    pub fn insert_population(&self, pop: Population) -> (String, Arc<Population>) {
        let id = new_id();
        let pop = Arc::new(pop);
        self.populations.write().unwrap().insert(id.clone(), pop.clone());
        (id, pop)
    }

    /// Look a population up, reloading it from the snapshot directory if needed.
    pub fn population(&self, id: &str) -> Result<Arc<Population>, ApiError> {
        if let Some(p) = self.populations.read().unwrap().get(id) {
            return Ok(p.clone());
        }
        let not_found = || ApiError::NotFound { what: "population", id: id.to_string() };
        let path = self.snapshot_path(id).ok_or_else(not_found)?;
        let bytes = std::fs::read(&path).map_err(|_| not_found())?;
        let pop = read_canonical_json(&bytes).map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))?;
        let pop = Arc::new(pop);
        self.populations.write().unwrap().entry(id.to_string()).or_insert(pop.clone());
        log::info!("reloaded population {id} from {}", path.display());
        Ok(pop)
    }

    pub fn remove_population(&self, id: &str) -> Result<(), ApiError> {
        self.population(id)?;
        let games = self.games.read().unwrap();
        if games.values().any(|g| g.population_id == id) {
            return Err(ApiError::InUse(id.to_string()));
        }
        self.populations.write().unwrap().remove(id);
        if let Some(path) = self.snapshot_path(id) {
            let _ = std::fs::remove_file(path);
        }
        Ok(())
    }

    /// Register a game. Fails if its population was deleted in the meantime.
    pub fn insert_game(&self, population_id: String, state: GameState) -> Result<String, ApiError> {
        // Lock order everywhere: games, then populations.
        let mut games = self.games.write().unwrap();
        if !self.populations.read().unwrap().contains_key(&population_id) {
            return Err(ApiError::NotFound { what: "population", id: population_id });
        }
        let id = new_id();
        games.insert(id.clone(), GameSlot { population_id, state: Arc::new(tokio::sync::Mutex::new(state)) });
        Ok(id)
    }

    pub fn game(&self, id: &str) -> Result<GameSlot, ApiError> {
        self.games
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound { what: "game", id: id.to_string() })
    }

    pub fn remove_game(&self, id: &str) -> Result<(), ApiError> {
        self.games
            .write()
            .unwrap()
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ApiError::NotFound { what: "game", id: id.to_string() })
    }

    pub fn replay(&self, key: &str) -> Option<Replay> {
        self.replays.lock().unwrap().get(key).cloned()
    }

    pub fn remember(&self, key: String, replay: Replay) {
        self.replays.lock().unwrap().insert(key, replay);
    }

    fn snapshot_path(&self, id: &str) -> Option<PathBuf> {
        // Only well-formed ids ever touch the file system.
        let dir = self.snapshot_dir.as_ref()?;
        Uuid::parse_str(id).ok()?;
        Some(dir.join(format!("{id}.json")))
    }

    /// Write every population held in memory to the snapshot directory.
    pub fn snapshot_all(&self) -> std::io::Result<usize> {
        let Some(dir) = &self.snapshot_dir else { return Ok(0) };
        std::fs::create_dir_all(dir)?;
        let pops = self.populations.read().unwrap();
        for (id, pop) in pops.iter() {
            write_atomic(&dir.join(format!("{id}.json")), &write_canonical_json(pop))?;
        }
        Ok(pops.len())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}
