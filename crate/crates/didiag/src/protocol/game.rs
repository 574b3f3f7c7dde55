use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::diagram::{parse, Bindings, Diagram};
use crate::regcalc::linalg::{anti_herm_norm, c, flatten, herm_eigenvalues, identity, kron, max_abs_diff, psd_sqrt, trace, unflatten, CMat, C64};
use crate::regcalc::{from_kraus, ProcessTensor, Register, FORMAT_VERSION};

/// A nonlocal game. Inputs and outputs are flattened player by player, left-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Game {
    pub name: String,
    pub input_dims: Vec<usize>,
    pub output_dims: Vec<usize>,
    pub input_distribution: Vec<f64>,
    /// `wins[x * |A| + a]` for flattened inputs `x` and outputs `a`.
    pub wins: Vec<bool>,
}

impl Game {
    pub fn new(name: &str, input_dims: Vec<usize>, output_dims: Vec<usize>, input_distribution: Vec<f64>, wins: Vec<bool>) -> Result<Self, ProtocolError> {
        let g = Game { name: name.into(), input_dims, output_dims, input_distribution, wins };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.input_dims.is_empty() || self.input_dims.len() != self.output_dims.len() {
            return Err(ProtocolError::Invalid("every player needs one input and one output register".into()));
        }
        if self.input_dims.iter().chain(&self.output_dims).any(|&d| d == 0) {
            return Err(ProtocolError::Invalid("register of dimension 0".into()));
        }
        if self.input_distribution.len() != self.input_count() || self.wins.len() != self.input_count() * self.output_count() {
            return Err(ProtocolError::Invalid("table sizes do not match the register dimensions".into()));
        }
        let total: f64 = self.input_distribution.iter().sum();
        if self.input_distribution.iter().any(|&p| p.is_nan() || p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(ProtocolError::Invalid(format!("input distribution sums to {total}")));
        }
        Ok(())
    }

    pub fn players(&self) -> usize {
        self.input_dims.len()
    }

    pub fn input_count(&self) -> usize {
        self.input_dims.iter().product()
    }

    pub fn output_count(&self) -> usize {
        self.output_dims.iter().product()
    }

    pub fn predicate(&self, inputs: &[usize], outputs: &[usize]) -> bool {
        let x = flatten(inputs, &self.input_dims);
        self.wins[x * self.output_count() + flatten(outputs, &self.output_dims)]
    }

    pub fn input_prob(&self, inputs: &[usize]) -> f64 {
        self.input_distribution[flatten(inputs, &self.input_dims)]
    }
}

/// Uniform bits `x, y`; the players win when `a ⊕ b = x ∧ y`.
pub fn chsh_game() -> Game {
    let mut wins = Vec::with_capacity(16);
    for x in 0..2 {
        for y in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    wins.push(a ^ b == x & y);
                }
            }
        }
    }
    Game::new("chsh", vec![2, 2], vec![2, 2], vec![0.25; 4], wins).expect("well-formed")
}

/// Best value over deterministic strategies, by exhaustive search. Returns the value
/// and one optimal strategy as the answer table `answers[player][input]`.
pub fn classical_value(g: &Game) -> (f64, Vec<Vec<usize>>) {
    // one answer per (player, input) slot
    let slots: Vec<(usize, usize)> = (0..g.players()).flat_map(|p| (0..g.input_dims[p]).map(move |x| (p, x))).collect();
    let radix: Vec<usize> = slots.iter().map(|&(p, _)| g.output_dims[p]).collect();
    let count: usize = radix.iter().product();
    let mut best = (f64::NEG_INFINITY, vec![]);
    for idx in 0..count {
        let digits = unflatten(idx, &radix);
        let mut answers: Vec<Vec<usize>> = g.input_dims.iter().map(|&d| vec![0; d]).collect();
        for (&(p, x), &a) in slots.iter().zip(&digits) {
            answers[p][x] = a;
        }
        let mut value = 0.0;
        for xi in 0..g.input_count() {
            let x = unflatten(xi, &g.input_dims);
            let a: Vec<usize> = x.iter().enumerate().map(|(p, &xp)| answers[p][xp]).collect();
            if g.predicate(&x, &a) {
                value += g.input_distribution[xi];
            }
        }
        if value > best.0 {
            best = (value, answers);
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceMode {
    /// Every round measures a fresh copy of the shared state.
    Iid,
    /// One shared state, updated by the Lüders rule after each round.
    Scripted,
}

/// Shared state and local measurements of a set of devices.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceStrategy {
    pub name: String,
    pub mode: DeviceMode,
    pub local_dims: Vec<usize>,
    /// Density operator on the product of the local spaces.
    pub state: CMat,
    /// `povms[player][input][outcome]`.
    pub povms: Vec<Vec<Vec<CMat>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum StateSpec {
    Vector(Vec<[f64; 2]>),
    Density(Vec<[f64; 2]>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategyFile {
    format_version: u32,
    name: String,
    mode: DeviceMode,
    local_dims: Vec<usize>,
    state: StateSpec,
    /// Row-major `[re, im]` entries of every effect.
    povms: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
}

fn flat(m: &CMat) -> Vec<[f64; 2]> {
    (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| (r, c))).map(|(r, c)| [m[(r, c)].re, m[(r, c)].im]).collect()
}

fn square(data: &[[f64; 2]], n: usize, what: &str) -> Result<CMat, String> {
    if data.len() != n * n {
        return Err(format!("{what} has {} entries, expected {}", data.len(), n * n));
    }
    Ok(CMat::from_fn(n, n, |r, c| C64::new(data[r * n + c][0], data[r * n + c][1])))
}

impl Serialize for DeviceStrategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let povms = self.povms.iter().map(|p| p.iter().map(|m| m.iter().map(flat).collect()).collect()).collect();
        StrategyFile {
            format_version: FORMAT_VERSION,
            name: self.name.clone(),
            mode: self.mode,
            local_dims: self.local_dims.clone(),
            state: StateSpec::Density(flat(&self.state)),
            povms,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DeviceStrategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let f = StrategyFile::deserialize(d)?;
        if f.format_version != FORMAT_VERSION {
            return Err(D::Error::custom(format!("unsupported format_version {}", f.format_version)));
        }
        let n: usize = f.local_dims.iter().product();
        let state = match f.state {
            StateSpec::Vector(v) => {
                if v.len() != n {
                    return Err(D::Error::custom(format!("state vector has {} entries, expected {n}", v.len())));
                }
                let col = CMat::from_fn(n, 1, |r, _| C64::new(v[r][0], v[r][1]));
                &col * col.adjoint()
            }
            StateSpec::Density(m) => square(&m, n, "state").map_err(D::Error::custom)?,
        };
        if f.povms.len() != f.local_dims.len() {
            return Err(D::Error::custom("one POVM list per device is required"));
        }
        let mut povms = Vec::new();
        for (p, list) in f.povms.iter().enumerate() {
            let dim = f.local_dims[p];
            let mut per_input = Vec::new();
            for effects in list {
                per_input.push(effects.iter().map(|e| square(e, dim, "effect")).collect::<Result<Vec<_>, _>>().map_err(D::Error::custom)?);
            }
            povms.push(per_input);
        }
        Ok(DeviceStrategy { name: f.name, mode: f.mode, local_dims: f.local_dims, state, povms })
    }
}

/// Projector onto `cos θ |0⟩ + sin θ |1⟩`.
fn ray(theta: f64) -> CMat {
    let v = CMat::from_vec(2, 1, vec![c(theta.cos()), c(theta.sin())]);
    &v * v.adjoint()
}

/// Two-outcome measurement in the real basis at angle `theta`; outcome 0 is the `+1` eigenprojector.
fn real_basis(theta: f64) -> Vec<CMat> {
    let p = ray(theta);
    vec![p.clone(), identity(2) - p]
}

impl DeviceStrategy {
    /// Bell state `(|00⟩ + |11⟩)/√2`; Alice measures at angles 0 and π/4, Bob at ±π/8
    /// (Bloch angles 0, π/2 and ±π/4).
    pub fn chsh_optimal() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v = CMat::from_vec(4, 1, vec![c(h), c(0.0), c(0.0), c(h)]);
        let pi = std::f64::consts::PI;
        DeviceStrategy {
            name: "chsh_optimal".into(),
            mode: DeviceMode::Iid,
            local_dims: vec![2, 2],
            state: &v * v.adjoint(),
            povms: vec![vec![real_basis(0.0), real_basis(pi / 4.0)], vec![real_basis(pi / 8.0), real_basis(-pi / 8.0)]],
        }
    }

    /// Both devices answer 0 on every input.
    pub fn all_zero() -> Self {
        let one = CMat::from_element(1, 1, c(1.0));
        let zero = CMat::zeros(1, 1);
        let answer_zero = vec![one.clone(), zero];
        DeviceStrategy {
            name: "all_zero".into(),
            mode: DeviceMode::Iid,
            local_dims: vec![1, 1],
            state: one,
            povms: vec![vec![answer_zero.clone(); 2], vec![answer_zero; 2]],
        }
    }

    pub fn players(&self) -> usize {
        self.local_dims.len()
    }

    /// Check the state is a density operator and every POVM is complete and positive.
    pub fn validate(&self, tol: f64) -> Result<(), ProtocolError> {
        let err = |m: String| Err(ProtocolError::Strategy(m));
        let n: usize = self.local_dims.iter().product();
        if self.local_dims.is_empty() || self.local_dims.contains(&0) {
            return err("device dimensions must be positive".into());
        }
        if self.state.shape() != (n, n) {
            return err(format!("state is {:?}, expected {n}x{n}", self.state.shape()));
        }
        if anti_herm_norm(&self.state) > tol || herm_eigenvalues(&self.state)[0] < -tol {
            return err("state is not positive semidefinite".into());
        }
        if (trace(&self.state).re - 1.0).abs() > tol {
            return err(format!("state has trace {}", trace(&self.state).re));
        }
        if self.povms.len() != self.players() {
            return err("one POVM list per device is required".into());
        }
        for (p, list) in self.povms.iter().enumerate() {
            let d = self.local_dims[p];
            for (x, effects) in list.iter().enumerate() {
                if effects.is_empty() {
                    return err(format!("device {p} input {x}: no outcomes"));
                }
                let mut sum = CMat::zeros(d, d);
                for e in effects {
                    if e.shape() != (d, d) {
                        return err(format!("device {p} input {x}: effect is {:?}, expected {d}x{d}", e.shape()));
                    }
                    if anti_herm_norm(e) > tol || herm_eigenvalues(e)[0] < -tol {
                        return err(format!("device {p} input {x}: effect is not positive semidefinite"));
                    }
                    sum += e;
                }
                if max_abs_diff(&sum, &identity(d)) > tol {
                    return err(format!("device {p} input {x}: effects do not sum to the identity"));
                }
            }
        }
        Ok(())
    }

    /// Check the strategy plays `g`: right number of devices, inputs and outcomes.
    pub fn check_shape(&self, g: &Game) -> Result<(), ProtocolError> {
        if self.players() != g.players() {
            return Err(ProtocolError::Strategy(format!("{} devices for a {}-player game", self.players(), g.players())));
        }
        for p in 0..g.players() {
            if self.povms[p].len() != g.input_dims[p] || self.povms[p].iter().any(|e| e.len() != g.output_dims[p]) {
                return Err(ProtocolError::Strategy(format!("device {p} does not match the game's input/output sizes")));
            }
        }
        Ok(())
    }

    fn outcome_dims(&self, inputs: &[usize]) -> Vec<usize> {
        inputs.iter().enumerate().map(|(p, &x)| self.povms[p][x].len()).collect()
    }

    fn joint_effect(&self, inputs: &[usize], outputs: &[usize]) -> CMat {
        let mut e = CMat::from_element(1, 1, c(1.0));
        for (p, (&x, &a)) in inputs.iter().zip(outputs).enumerate() {
            e = kron(&e, &self.povms[p][x][a]);
        }
        e
    }

    /// Outcome distribution on `rho` for the given inputs, outcomes flattened left-major.
    pub fn outcome_probs(&self, rho: &CMat, inputs: &[usize]) -> Vec<f64> {
        let dims = self.outcome_dims(inputs);
        (0..dims.iter().product())
            .map(|k| {
                let e = self.joint_effect(inputs, &unflatten(k, &dims));
                trace(&(e * rho)).re.max(0.0)
            })
            .collect()
    }

    /// Normalized Lüders post-measurement state; `None` for a zero-probability outcome.
    pub fn post_measurement(&self, rho: &CMat, inputs: &[usize], outputs: &[usize]) -> Option<CMat> {
        let mut k = CMat::from_element(1, 1, c(1.0));
        for (p, (&x, &a)) in inputs.iter().zip(outputs).enumerate() {
            k = kron(&k, &psd_sqrt(&self.povms[p][x][a]));
        }
        let out = &k * rho * k.adjoint();
        let t = trace(&out).re;
        (t > 1e-300).then(|| out.unscale(t))
    }
}

/// Exact winning probability of `s` at `g`.
pub fn game_value(g: &Game, s: &DeviceStrategy) -> Result<f64, ProtocolError> {
    s.validate(1e-9)?;
    s.check_shape(g)?;
    let mut value = 0.0;
    for xi in 0..g.input_count() {
        let px = g.input_distribution[xi];
        if px == 0.0 {
            continue;
        }
        let x = unflatten(xi, &g.input_dims);
        let probs = s.outcome_probs(&s.state, &x);
        for (ai, p) in probs.iter().enumerate() {
            if g.wins[xi * g.output_count() + ai] {
                value += px * p;
            }
        }
    }
    Ok(value)
}

/// The measurement box of one device: classical input `x` and quantum share in, classical outcome out.
pub fn measurement_process(effects: &[Vec<CMat>], dim: usize) -> Result<ProcessTensor, ProtocolError> {
    let nx = effects.len();
    let na = effects.first().map_or(0, Vec::len);
    if nx == 0 || na == 0 || effects.iter().any(|e| e.len() != na) {
        return Err(ProtocolError::Strategy("every input needs the same number of outcomes".into()));
    }
    // K_{x,a,j} = |a⟩ (⟨x| ⊗ ⟨j| √E^x_a)
    let mut kraus = Vec::new();
    for (x, list) in effects.iter().enumerate() {
        for (a, e) in list.iter().enumerate() {
            let r = psd_sqrt(e);
            for j in 0..dim {
                let mut k = CMat::zeros(na, nx * dim);
                for col in 0..dim {
                    k[(a, x * dim + col)] = r[(j, col)];
                }
                kraus.push(k);
            }
        }
    }
    Ok(from_kraus(vec![Register::classical(nx), Register::quantum(dim)], vec![Register::classical(na)], &kraus)?)
}

fn require_two_player_uniform(g: &Game) -> Result<(), ProtocolError> {
    let u = 1.0 / g.input_count() as f64;
    if g.players() != 2 || g.input_distribution.iter().any(|&p| (p - u).abs() > 1e-12) {
        return Err(ProtocolError::Invalid("the game diagram needs two players and uniform inputs".into()));
    }
    Ok(())
}

/// The game as a diagram: uniform inputs copied to the referee, devices as holes, the
/// winning predicate as an effect. Evaluates to the winning probability.
pub fn game_diagram(g: &Game, local_dims: &[usize]) -> Result<Diagram, ProtocolError> {
    require_two_player_uniform(g)?;
    if local_dims.len() != 2 {
        return Err(ProtocolError::Invalid("two device dimensions are required".into()));
    }
    let text = format!(
        "reg X = classical {}\nreg A = classical {}\nreg Y = classical {}\nreg B = classical {}\n\
         reg QA = quantum {}\nreg QB = quantum {}\n\
         hole state : I -> QA*QB causal\nhole alice : X*QA -> A causal\nhole bob : Y*QB -> B causal\nhole win : X*A*Y*B -> I\n\
         (uniform X 2 * state * uniform Y 2) ;\n(id X * alice * swap QB Y * id Y) ;\n(id (X*A*Y) * swap QB Y) ;\n(id (X*A*Y) * bob) ;\nwin\n",
        g.input_dims[0], g.output_dims[0], g.input_dims[1], g.output_dims[1], local_dims[0], local_dims[1]
    );
    Ok(parse(&text)?)
}

/// Bindings for [`game_diagram`] from a strategy.
pub fn game_bindings(g: &Game, s: &DeviceStrategy) -> Result<Bindings, ProtocolError> {
    require_two_player_uniform(g)?;
    s.validate(1e-9)?;
    s.check_shape(g)?;
    let [da, db] = [s.local_dims[0], s.local_dims[1]];
    let state = ProcessTensor::from_density(vec![Register::quantum(da), Register::quantum(db)], &s.state)?;
    let (nx, na, ny, nb) = (g.input_dims[0], g.output_dims[0], g.input_dims[1], g.output_dims[1]);
    let mut row = Vec::with_capacity(nx * na * ny * nb);
    for x in 0..nx {
        for a in 0..na {
            for y in 0..ny {
                for b in 0..nb {
                    row.push(c(if g.predicate(&[x, y], &[a, b]) { 1.0 } else { 0.0 }));
                }
            }
        }
    }
    let regs = [nx, na, ny, nb].map(Register::classical).to_vec();
    Ok(Bindings::new()
        .with("state", state)
        .with("alice", measurement_process(&s.povms[0], da)?)
        .with("bob", measurement_process(&s.povms[1], db)?)
        .with("win", ProcessTensor::effect(regs, row)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::evaluate;
    use crate::regcalc::structural_predicates;

    #[test]
    fn chsh_predicate() {
        let g = chsh_game();
        assert!(g.predicate(&[0, 0], &[0, 0]));
        assert!(!g.predicate(&[1, 1], &[0, 0]));
        assert!(g.predicate(&[1, 1], &[0, 1]));
        assert_eq!(g.input_prob(&[1, 0]), 0.25);
    }

    #[test]
    fn chsh_classical_value() {
        let (v, answers) = classical_value(&chsh_game());
        assert_eq!(v, 0.75);
        assert_eq!(answers.len(), 2);
    }

    #[test]
    fn optimal_and_all_zero_values() {
        let g = chsh_game();
        let v = game_value(&g, &DeviceStrategy::chsh_optimal()).unwrap();
        assert!((v - (0.5 + 2f64.sqrt() / 4.0)).abs() < 1e-9, "{v}");
        assert!((game_value(&g, &DeviceStrategy::all_zero()).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn diagram_matches_direct_value() {
        let g = chsh_game();
        for s in [DeviceStrategy::chsh_optimal(), DeviceStrategy::all_zero()] {
            let d = game_diagram(&g, &s.local_dims).unwrap();
            let v = evaluate(&d, &game_bindings(&g, &s).unwrap()).unwrap().as_number().unwrap();
            assert!((v.re - game_value(&g, &s).unwrap()).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn measurement_box_is_causal() {
        let s = DeviceStrategy::chsh_optimal();
        let m = measurement_process(&s.povms[1], 2).unwrap();
        assert!(structural_predicates(&m, 1e-9).causal);
    }

    #[test]
    fn rejects_incomplete_povm() {
        let mut s = DeviceStrategy::chsh_optimal();
        s.povms[0][1].pop();
        s.povms[0][1].push(CMat::zeros(2, 2));
        assert!(matches!(s.validate(1e-9), Err(ProtocolError::Strategy(_))));
    }

    #[test]
    fn strategy_round_trips_through_json() {
        let s = DeviceStrategy::chsh_optimal();
        let back: DeviceStrategy = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert!(max_abs_diff(&back.state, &s.state) < 1e-15);
        assert_eq!(back.povms.len(), 2);
    }

    #[test]
    fn scripted_update_is_normalized() {
        let s = DeviceStrategy::chsh_optimal();
        let post = s.post_measurement(&s.state, &[0, 0], &[0, 0]).unwrap();
        assert!((trace(&post).re - 1.0).abs() < 1e-12);
    }
}
