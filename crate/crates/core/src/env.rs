//! The two-ball Catch environment on a 24x24 grid.
//!
//! A one-pixel ball falls from a random column; the agent slides a
//! two-pixel paddle along the bottom row. White and grey balls alternate
//! every episode. Under positive transfer both pay +1 when caught; under
//! negative transfer the grey ball pays +1 and the white ball -1, with 0
//! for any miss. Episodes last exactly [`EPISODE_STEPS`] steps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid side length.
pub const GRID: usize = 24;
/// Frames per observation stack.
pub const STACK: usize = 4;
/// Steps per episode; the ball spawns one row above the grid and lands on
/// the bottom row after exactly this many steps, so 6000 evaluation steps
/// are exactly 250 episodes.
pub const EPISODE_STEPS: usize = 24;
/// Rightmost legal paddle-left column (paddle is 2 pixels wide).
pub const PADDLE_MAX_LEFT: usize = GRID - 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferMode {
    Positive,
    Negative,
}

impl TransferMode {
    pub fn name(&self) -> &'static str {
        match self {
            TransferMode::Positive => "positive",
            TransferMode::Negative => "negative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BallType {
    White,
    Grey,
}

impl BallType {
    pub fn for_episode(index: u64) -> BallType {
        if index.is_multiple_of(2) {
            BallType::White
        } else {
            BallType::Grey
        }
    }

    /// Rendered intensity in half-units (0..=2 maps to 0.0, 0.5, 1.0).
    fn half_intensity(&self) -> u8 {
        match self {
            BallType::White => 2,
            BallType::Grey => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Left = 0,
    NoOp = 1,
    Right = 2,
}

impl Action {
    pub fn from_index(i: usize) -> Action {
        match i {
            0 => Action::Left,
            2 => Action::Right,
            _ => Action::NoOp,
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvState {
    /// -1 before the ball enters the grid, otherwise 0..=23.
    pub ball_row: i32,
    pub ball_col: usize,
    pub paddle_left: usize,
    pub ball_type: BallType,
    pub step_count: usize,
    pub mode: TransferMode,
}

impl EnvState {
    pub fn is_terminal(&self) -> bool {
        self.step_count >= EPISODE_STEPS
    }
}

/// One rendered frame; intensities stored in half-units {0, 1, 2}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame(pub Vec<u8>);

impl Frame {
    pub fn intensity(&self, row: usize, col: usize) -> f64 {
        self.0[row * GRID + col] as f64 / 2.0
    }
}

/// Stack of the current plus previous 3 frames (oldest first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    frames: Vec<Frame>,
}

impl Observation {
    fn repeat(frame: Frame) -> Observation {
        Observation {
            frames: vec![frame; STACK],
        }
    }

    fn push(&mut self, frame: Frame) {
        self.frames.remove(0);
        self.frames.push(frame);
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn current(&self) -> &Frame {
        &self.frames[STACK - 1]
    }

    pub fn intensity(&self, frame: usize, row: usize, col: usize) -> f64 {
        self.frames[frame].intensity(row, col)
    }

    /// Write the stack as f64 intensities into `out` (length 4*24*24),
    /// oldest frame first.
    pub fn write_f64(&self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), STACK * GRID * GRID);
        for (chunk, frame) in out.chunks_mut(GRID * GRID).zip(&self.frames) {
            for (o, v) in chunk.iter_mut().zip(&frame.0) {
                *o = *v as f64 / 2.0;
            }
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        let mut out = vec![0.0; STACK * GRID * GRID];
        self.write_f64(&mut out);
        out
    }
}

/// Render the current frame: background 0.0, paddle 1.0, ball 1.0 (white)
/// or 0.5 (grey). The ball is invisible while still above the grid.
pub fn render(state: &EnvState) -> Frame {
    let mut f = vec![0u8; GRID * GRID];
    f[(GRID - 1) * GRID + state.paddle_left] = 2;
    f[(GRID - 1) * GRID + state.paddle_left + 1] = 2;
    if state.ball_row >= 0 {
        f[state.ball_row as usize * GRID + state.ball_col] = state.ball_type.half_intensity();
    }
    Frame(f)
}

pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: bool,
}

/// Environment plus the frame-stack history needed for observations.
#[derive(Debug, Clone)]
pub struct CatchEnv {
    pub state: EnvState,
    stack: Observation,
}

impl CatchEnv {
    /// Start a new episode. The ball column and paddle start are uniform
    /// random; the ball type alternates with the episode index.
    pub fn reset<R: Rng>(mode: TransferMode, episode_index: u64, rng: &mut R) -> CatchEnv {
        let state = EnvState {
            ball_row: -1,
            ball_col: rng.gen_range(0..GRID),
            paddle_left: rng.gen_range(0..=PADDLE_MAX_LEFT),
            ball_type: BallType::for_episode(episode_index),
            step_count: 0,
            mode,
        };
        let stack = Observation::repeat(render(&state));
        CatchEnv { state, stack }
    }

    /// Deterministic reset used by the exhaustive oracle.
    pub fn reset_at(
        mode: TransferMode,
        ball_type: BallType,
        ball_col: usize,
        paddle_left: usize,
    ) -> CatchEnv {
        assert!(ball_col < GRID && paddle_left <= PADDLE_MAX_LEFT);
        let state = EnvState {
            ball_row: -1,
            ball_col,
            paddle_left,
            ball_type,
            step_count: 0,
            mode,
        };
        let stack = Observation::repeat(render(&state));
        CatchEnv { state, stack }
    }

    pub fn observation(&self) -> &Observation {
        &self.stack
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.state.is_terminal() {
            return Err(Error::TerminalStep);
        }
        let s = &mut self.state;
        s.paddle_left = match action {
            Action::Left => s.paddle_left.saturating_sub(1),
            Action::NoOp => s.paddle_left,
            Action::Right => (s.paddle_left + 1).min(PADDLE_MAX_LEFT),
        };
        s.ball_row += 1;
        s.step_count += 1;
        let terminal = s.ball_row == (GRID - 1) as i32;
        debug_assert_eq!(terminal, s.step_count == EPISODE_STEPS);

        let reward = if terminal {
            let caught = s.ball_col == s.paddle_left || s.ball_col == s.paddle_left + 1;
            match (s.mode, s.ball_type, caught) {
                (_, _, false) => 0.0,
                (TransferMode::Positive, _, true) => 1.0,
                (TransferMode::Negative, BallType::Grey, true) => 1.0,
                (TransferMode::Negative, BallType::White, true) => -1.0,
            }
        } else {
            0.0
        };

        self.stack.push(render(&self.state));
        Ok(StepResult {
            observation: self.stack.clone(),
            reward,
            terminal,
        })
    }
}

/// Action of the hand-coded optimal policy for `state`: chase the ball when
/// it should be caught, dodge it when it should be avoided.
pub fn optimal_action(state: &EnvState) -> Action {
    let avoid = state.mode == TransferMode::Negative && state.ball_type == BallType::White;
    let pl = state.paddle_left;
    let bc = state.ball_col;
    if avoid {
        if bc == pl {
            if pl < PADDLE_MAX_LEFT {
                Action::Right
            } else {
                Action::Left
            }
        } else if bc == pl + 1 {
            if pl > 0 {
                Action::Left
            } else {
                Action::Right
            }
        } else {
            Action::NoOp
        }
    } else if bc < pl {
        Action::Left
    } else if bc > pl + 1 {
        Action::Right
    } else {
        Action::NoOp
    }
}

/// Expected per-episode score of the optimal policy, computed by exhaustive
/// enumeration over every (ball type, ball column, paddle start) triple.
pub fn optimal_episode_score(mode: TransferMode) -> f64 {
    let mut total = 0.0;
    let mut episodes = 0usize;
    for ball_type in [BallType::White, BallType::Grey] {
        for ball_col in 0..GRID {
            for paddle_left in 0..=PADDLE_MAX_LEFT {
                let mut env = CatchEnv::reset_at(mode, ball_type, ball_col, paddle_left);
                let mut score = 0.0;
                loop {
                    let action = optimal_action(&env.state);
                    let r = env.step(action).expect("episode over-ran");
                    score += r.reward;
                    if r.terminal {
                        break;
                    }
                }
                total += score;
                episodes += 1;
            }
        }
    }
    // Episode alternation weights both ball types equally, as does the
    // enumeration.
    total / episodes as f64
}

/// Write one frame as a binary PGM (intensities scaled to 0/128/255).
pub fn write_pgm(frame: &Frame, path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut out = Vec::with_capacity(GRID * GRID + 32);
    write!(out, "P5\n{GRID} {GRID}\n255\n")
        .map_err(|e| Error::io(format!("formatting {}", path.display()), e))?;
    out.extend(frame.0.iter().map(|v| match v {
        0 => 0u8,
        1 => 128,
        _ => 255,
    }));
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn episode_alternates_ball_type() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e0 = CatchEnv::reset(TransferMode::Positive, 0, &mut rng);
        let e1 = CatchEnv::reset(TransferMode::Positive, 1, &mut rng);
        assert_eq!(e0.state.ball_type, BallType::White);
        assert_eq!(e1.state.ball_type, BallType::Grey);
    }

    #[test]
    fn reset_is_deterministic_in_rng() {
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        let ea = CatchEnv::reset(TransferMode::Positive, 0, &mut a);
        let eb = CatchEnv::reset(TransferMode::Positive, 0, &mut b);
        assert_eq!(ea.state, eb.state);
    }

    #[test]
    fn paddle_clamps_at_walls() {
        let mut env = CatchEnv::reset_at(TransferMode::Positive, BallType::White, 10, 0);
        env.step(Action::Left).unwrap();
        assert_eq!(env.state.paddle_left, 0);
        let mut env = CatchEnv::reset_at(TransferMode::Positive, BallType::White, 10, PADDLE_MAX_LEFT);
        env.step(Action::Right).unwrap();
        assert_eq!(env.state.paddle_left, PADDLE_MAX_LEFT);
    }

    #[test]
    fn episode_is_exactly_24_steps() {
        let mut env = CatchEnv::reset_at(TransferMode::Positive, BallType::White, 5, 4);
        for step in 1..=EPISODE_STEPS {
            let r = env.step(Action::NoOp).unwrap();
            assert_eq!(r.terminal, step == EPISODE_STEPS);
        }
        assert!(env.step(Action::NoOp).is_err());
    }

    #[test]
    fn negative_mode_rewards() {
        // grey caught -> +1
        let mut env = CatchEnv::reset_at(TransferMode::Negative, BallType::Grey, 5, 4);
        let mut last = 0.0;
        while let Ok(r) = env.step(Action::NoOp) {
            last = r.reward;
            if r.terminal {
                break;
            }
        }
        assert_eq!(last, 1.0);
        // white caught -> -1
        let mut env = CatchEnv::reset_at(TransferMode::Negative, BallType::White, 5, 4);
        let mut last = 0.0;
        while let Ok(r) = env.step(Action::NoOp) {
            last = r.reward;
            if r.terminal {
                break;
            }
        }
        assert_eq!(last, -1.0);
        // miss -> 0
        let mut env = CatchEnv::reset_at(TransferMode::Negative, BallType::White, 20, 0);
        let mut last = 1.0;
        while let Ok(r) = env.step(Action::NoOp) {
            last = r.reward;
            if r.terminal {
                break;
            }
        }
        assert_eq!(last, 0.0);
    }

    #[test]
    fn render_intensities() {
        let mut state = EnvState {
            ball_row: 5,
            ball_col: 7,
            paddle_left: 3,
            ball_type: BallType::White,
            step_count: 6,
            mode: TransferMode::Positive,
        };
        let f = render(&state);
        assert_eq!(f.intensity(5, 7), 1.0);
        state.ball_type = BallType::Grey;
        let f = render(&state);
        assert_eq!(f.intensity(5, 7), 0.5);
        let nonzero = f.0.iter().filter(|v| **v > 0).count();
        assert_eq!(nonzero, 3);
        assert_eq!(f.intensity(23, 3), 1.0);
        assert_eq!(f.intensity(23, 4), 1.0);
    }

    #[test]
    fn ball_invisible_above_grid() {
        let state = EnvState {
            ball_row: -1,
            ball_col: 7,
            paddle_left: 3,
            ball_type: BallType::White,
            step_count: 0,
            mode: TransferMode::Positive,
        };
        let f = render(&state);
        assert_eq!(f.0.iter().filter(|v| **v > 0).count(), 2);
    }

    #[test]
    fn reward_only_on_terminal_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for ep in 0..20 {
            let mut env = CatchEnv::reset(TransferMode::Negative, ep, &mut rng);
            let mut total = 0.0;
            loop {
                let action = Action::from_index(rng.gen_range(0..3));
                let r = env.step(action).unwrap();
                if !r.terminal {
                    assert_eq!(r.reward, 0.0);
                }
                total += r.reward;
                if r.terminal {
                    break;
                }
            }
            assert!([-1.0, 0.0, 1.0].contains(&total));
        }
    }

    #[test]
    fn oracle_scores() {
        assert_eq!(optimal_episode_score(TransferMode::Positive), 1.0);
        assert_eq!(optimal_episode_score(TransferMode::Negative), 0.5);
    }

    #[test]
    fn worst_case_column_is_reachable() {
        // ball at column 23, paddle starting far left
        let mut env = CatchEnv::reset_at(TransferMode::Positive, BallType::White, GRID - 1, 0);
        let mut score = 0.0;
        loop {
            let a = optimal_action(&env.state);
            let r = env.step(a).unwrap();
            score += r.reward;
            if r.terminal {
                break;
            }
        }
        assert_eq!(score, 1.0);
    }

    #[test]
    fn stack_matches_last_four_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut env = CatchEnv::reset(TransferMode::Positive, 0, &mut rng);
        let mut frames = vec![render(&env.state); STACK];
        for _ in 0..10 {
            let r = env.step(Action::Right).unwrap();
            frames.remove(0);
            frames.push(render(&env.state));
            assert_eq!(r.observation.frames(), &frames[..]);
        }
    }
}
