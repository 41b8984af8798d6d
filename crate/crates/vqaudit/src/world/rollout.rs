//! Random-walk episodes.

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::{action, hud_slot, render, tile, walkable, EpisodeLog, Step, TileGrid, HUD_SLOTS};

/// Mutable world state during an episode: tile layout (pickups consume
/// tiles), agent position, and HUD counters.
#[derive(Clone, Debug)]
pub struct WorldState {
    pub grid: TileGrid,
    pub agent: (usize, usize),
    pub hud: [u8; HUD_SLOTS],
}

impl WorldState {
    /// Starts at the grid's spawn cell with empty counters.
    pub fn new(grid: TileGrid) -> Result<WorldState> {
        grid.validate()?;
        let agent = grid.spawn();
        Ok(WorldState { grid, agent, hud: [0; HUD_SLOTS] })
    }

    /// Applies one action. Moves into water, stone, or out of bounds leave
    /// the agent in place. Stepping onto a tree or coal tile collects it:
    /// the counter increments (clamped at 9) and the tile becomes grass.
    pub fn apply(&mut self, act: u8) {
        let (r, c) = self.agent;
        let target = match act {
            action::UP => (r.checked_sub(1), Some(c)),
            action::DOWN => (Some(r + 1), Some(c)),
            action::LEFT => (Some(r), c.checked_sub(1)),
            action::RIGHT => (Some(r), Some(c + 1)),
            _ => return, // stay
        };
        let (Some(nr), Some(nc)) = target else { return };
        if nr >= self.grid.rows || nc >= self.grid.cols {
            return;
        }
        let dest = self.grid.get(nr, nc);
        if !walkable(dest) {
            return;
        }
        match dest {
            tile::TREE => {
                self.hud[hud_slot::WOOD] = (self.hud[hud_slot::WOOD] + 1).min(9);
                self.grid.set(nr, nc, tile::GRASS);
            }
            tile::COAL => {
                self.hud[hud_slot::COAL] = (self.hud[hud_slot::COAL] + 1).min(9);
                self.grid.set(nr, nc, tile::GRASS);
            }
            _ => {}
        }
        self.agent = (nr, nc);
    }
}

/// Rolls out `steps` uniform-random actions from the spawn and records every
/// transition. Deterministic per `(grid, seed)`; the caller supplies the
/// episode id used in filenames and logs.
pub fn rollout(grid: &TileGrid, seed: u64, steps: usize, episode: u64) -> Result<EpisodeLog> {
    if steps == 0 {
        return Err(Error::Config("rollout needs at least one step".into()));
    }
    let mut rng = Rng::seed_from_u64(seed);
    let mut state = WorldState::new(grid.clone())?;
    let mut obs = render(&state.grid, Some(state.agent), &state.hud)?;
    let mut log = EpisodeLog { episode, steps: Vec::with_capacity(steps) };
    for _ in 0..steps {
        let act = rng.below(action::COUNT) as u8;
        state.apply(act);
        let next = render(&state.grid, Some(state.agent), &state.hud)?;
        log.steps.push(Step { obs, action: act, next: next.clone() });
        obs = next;
    }
    Ok(log)
}
