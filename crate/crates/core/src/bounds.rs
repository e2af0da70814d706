//! Closed-form mean-field approximation widths.
//!
//! For environment constants `(M_J, L_J, L_P)`, policy Lipschitz constant
//! `L_Q`, discount `gamma` and population size `N`:
//!
//! ```text
//! S_J = (M_J + 2 L_J) + L_Q (M_J + L_J)        J in {R, C}
//! S_P = 1 + 2 L_P + L_Q (1 + L_P)
//! C_P = 2 + L_P
//! K   = [1/(1 - gamma S_P) - 1/(1 - gamma)] / (S_P - 1)
//!     = gamma / ((1 - gamma)(1 - gamma S_P))
//! G_J   = (M_J + L_J sqrt|U|) / (sqrt(N)(1 - gamma)) + (sqrt|X| + sqrt|U|)/sqrt(N) * S_J C_P K
//! G_J^0 = M_J / (sqrt(N)(1 - gamma))               + sqrt|X|/sqrt(N) * 2 S_J K
//! ```
//!
//! `G_J^0` applies when reward, cost and kernel ignore the action
//! distribution. Both require the contraction `gamma S_P < 1`; otherwise only
//! the `S` constants are reported. The second form of `K` is used for
//! evaluation; it is algebraically equal to the first and has no removable
//! singularity at `S_P = 1`, where it equals `gamma / (1 - gamma)^2`.
//!
//! The value-gap widths use `|zeta0|` for the Slater margin `zeta0 < 0`:
//! `gap = G_R + G_C * 4 / |zeta0| * M_R / (1 - gamma)`.
//!
//! The `S_P` used here multiplies `L_Q` by `(1 + L_P)`, the constant under
//! which the kernel of the mean-field map is Lipschitz.

use serde::{Deserialize, Serialize};

use crate::envmodel::EnvConstants;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputs {
    pub m_r: f64,
    pub m_c: f64,
    pub l_r: f64,
    pub l_c: f64,
    pub l_p: f64,
    pub l_q: f64,
    pub gamma: f64,
    pub n_agents: usize,
    pub n_states: usize,
    pub n_actions: usize,
    /// Slater margin of the finite-population problem; must be negative.
    pub zeta0: f64,
    /// Slater margin of the mean-field problem, informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta1: Option<f64>,
}

impl BoundInputs {
    /// Inputs from an environment's declared constants.
    #[allow(clippy::too_many_arguments)]
    pub fn from_env(
        k: &EnvConstants,
        l_q: f64,
        gamma: f64,
        n_agents: usize,
        n_states: usize,
        n_actions: usize,
        zeta0: f64,
    ) -> Self {
        Self {
            m_r: k.m_r,
            m_c: k.m_c,
            l_r: k.l_r,
            l_c: k.l_c,
            l_p: k.l_p,
            l_q,
            gamma,
            n_agents,
            n_states,
            n_actions,
            zeta0,
            zeta1: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.m_r, self.m_c, self.l_r, self.l_c, self.l_p, self.l_q];
        if nonneg.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig("bound and Lipschitz constants must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("discount {} outside [0, 1)", self.gamma)));
        }
        if !(self.zeta0 < 0.0) {
            return Err(Error::InvalidConfig(format!("zeta0 = {} must be negative", self.zeta0)));
        }
        if self.n_agents == 0 || self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::InvalidConfig("N, |X| and |U| must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOutputs {
    pub s_r: f64,
    pub s_c: f64,
    pub s_p: f64,
    pub c_p: f64,
    pub gamma_s_p: f64,
    pub contraction_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_r0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem1_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem2_gap: Option<f64>,
}

/// `[1/(1 - gamma s) - 1/(1 - gamma)] / (s - 1)` in its singularity-free form.
pub fn mismatch_factor(gamma: f64, s_p: f64) -> f64 {
    gamma / ((1.0 - gamma) * (1.0 - gamma * s_p))
}

pub fn compute_bounds(inp: &BoundInputs) -> Result<BoundOutputs> {
    inp.validate()?;
    let BoundInputs { m_r, m_c, l_r, l_c, l_p, l_q, gamma, .. } = *inp;
    let s = |m: f64, l: f64| (m + 2.0 * l) + l_q * (m + l);
    let s_r = s(m_r, l_r);
    let s_c = s(m_c, l_c);
    let s_p = 1.0 + 2.0 * l_p + l_q * (1.0 + l_p);
    let c_p = 2.0 + l_p;
    let gamma_s_p = gamma * s_p;
    let mut out = BoundOutputs {
        s_r,
        s_c,
        s_p,
        c_p,
        gamma_s_p,
        contraction_ok: gamma_s_p < 1.0,
        g_r: None,
        g_c: None,
        g_r0: None,
        g_c0: None,
        theorem1_gap: None,
        theorem2_gap: None,
    };
    if !out.contraction_ok {
        return Ok(out);
    }

    let root_n = (inp.n_agents as f64).sqrt();
    let root_x = (inp.n_states as f64).sqrt();
    let root_u = (inp.n_actions as f64).sqrt();
    let k = mismatch_factor(gamma, s_p);
    let g = |m: f64, l: f64, s_j: f64| {
        (m + l * root_u) / (root_n * (1.0 - gamma)) + (root_x + root_u) / root_n * s_j * c_p * k
    };
    let g0 = |m: f64, s_j: f64| m / (root_n * (1.0 - gamma)) + root_x / root_n * 2.0 * s_j * k;
    let (g_r, g_c) = (g(m_r, l_r, s_r), g(m_c, l_c, s_c));
    let (g_r0, g_c0) = (g0(m_r, s_r), g0(m_c, s_c));
    let slater = 4.0 / inp.zeta0.abs() * m_r / (1.0 - gamma);

    out.g_r = Some(g_r);
    out.g_c = Some(g_c);
    out.g_r0 = Some(g_r0);
    out.g_c0 = Some(g_c0);
    out.theorem1_gap = Some(g_r + g_c * slater);
    out.theorem2_gap = Some(g_r0 + g_c0 * slater);
    Ok(out)
}

/// How far to tighten a raw constraint level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TighteningMode {
    /// `zeta - G_C`: the level at which the mean-field optimum stays feasible
    /// for the finite population.
    MeanField,
    /// `zeta - 2 G_C`: the level the primal-dual solver targets.
    Solver,
}

pub fn tightened_zeta(inp: &BoundInputs, mode: TighteningMode, zeta_raw: f64) -> Result<f64> {
    let out = compute_bounds(inp)?;
    let g_c = out.g_c.ok_or(Error::ContractionFailed(out.gamma_s_p))?;
    Ok(match mode {
        TighteningMode::MeanField => zeta_raw - g_c,
        TighteningMode::Solver => zeta_raw - 2.0 * g_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden() -> BoundInputs {
        BoundInputs {
            m_r: 1.0,
            m_c: 1.0,
            l_r: 0.1,
            l_c: 0.1,
            l_p: 0.1,
            l_q: 0.1,
            gamma: 0.5,
            n_agents: 100,
            n_states: 10,
            n_actions: 2,
            zeta0: -1.0,
            zeta1: None,
        }
    }

    /// The mismatch factor exactly as printed, singular at `s = 1`.
    fn raw_factor(gamma: f64, s: f64) -> f64 {
        (1.0 / (1.0 - gamma * s) - 1.0 / (1.0 - gamma)) / (s - 1.0)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn golden_vector() {
        // 50-digit evaluation of the printed formulas
        let o = compute_bounds(&golden()).unwrap();
        assert!(o.contraction_ok);
        let expect = [
            (o.s_r, 1.31),
            (o.s_c, 1.31),
            (o.s_p, 1.31),
            (o.c_p, 2.1),
            (o.g_r.unwrap(), 3.877_538_576_526_185_385_5),
            (o.g_c.unwrap(), 3.877_538_576_526_185_385_5),
            (o.g_r0.unwrap(), 2.601_497_817_287_290_971),
            (o.g_c0.unwrap(), 2.601_497_817_287_290_971),
            (o.theorem1_gap.unwrap(), 34.897_847_188_735_668_469),
            (o.theorem2_gap.unwrap(), 23.413_480_355_585_618_739),
        ];
        for (got, want) in expect {
            assert!(rel(got, want) < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn lipschitz_free_case_uses_limit() {
        let inp = BoundInputs { m_r: 1.0, l_r: 0.0, l_c: 0.0, l_p: 0.0, l_q: 0.0, gamma: 0.9, ..golden() };
        let o = compute_bounds(&inp).unwrap();
        assert_eq!((o.s_r, o.s_p, o.c_p), (1.0, 1.0, 2.0));
        let n = 100f64;
        let expect = 1.0 / 0.1 / n.sqrt() + (10f64.sqrt() + 2f64.sqrt()) / n.sqrt() * 2.0 * 0.9 / 0.01;
        assert!(rel(o.g_r.unwrap(), expect) < 1e-12);
        // cross-check against the printed form just off the singularity
        let near = (10f64.sqrt() + 2f64.sqrt()) / n.sqrt() * 2.0 * raw_factor(0.9, 1.0 + 1e-9) + 1.0 / 0.1 / n.sqrt();
        assert!(rel(o.g_r.unwrap(), near) < 1e-5);
    }

    #[test]
    fn quadrupling_population_halves_widths() {
        let a = compute_bounds(&golden()).unwrap();
        let b = compute_bounds(&BoundInputs { n_agents: 400, ..golden() }).unwrap();
        for (x, y) in [(a.g_r, b.g_r), (a.g_c, b.g_c), (a.g_r0, b.g_r0), (a.g_c0, b.g_c0)] {
            assert!((x.unwrap() / y.unwrap() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn continuity_at_unit_s_p() {
        for gamma in [0.3, 0.5, 0.9] {
            let limit = mismatch_factor(gamma, 1.0);
            assert!(rel(limit, gamma / (1.0 - gamma).powi(2)) < 1e-15);
            let lo = raw_factor(gamma, 1.0 - 1e-6);
            let hi = raw_factor(gamma, 1.0 + 1e-6);
            assert!(lo.min(hi) <= limit * (1.0 + 1e-4) && lo.max(hi) >= limit * (1.0 - 1e-4));
            assert!(rel(lo, limit) < 1e-4 && rel(hi, limit) < 1e-4);
        }
    }

    #[test]
    fn closed_form_matches_printed_form_away_from_one() {
        for (g, s) in [(0.5, 1.31), (0.9, 1.05), (0.2, 3.0), (0.7, 0.5)] {
            assert!(rel(mismatch_factor(g, s), raw_factor(g, s)) < 1e-12);
        }
    }

    #[test]
    fn contraction_failure_drops_widths() {
        let o = compute_bounds(&BoundInputs { l_p: 9.0, gamma: 0.9, ..golden() }).unwrap();
        assert!(!o.contraction_ok);
        assert!(o.g_r.is_none() && o.g_c0.is_none() && o.theorem1_gap.is_none());
        assert!(matches!(
            tightened_zeta(&BoundInputs { l_p: 9.0, gamma: 0.9, ..golden() }, TighteningMode::MeanField, 0.0),
            Err(Error::ContractionFailed(_))
        ));
    }

    #[test]
    fn tightening_modes() {
        let g_c = compute_bounds(&golden()).unwrap().g_c.unwrap();
        let t1 = tightened_zeta(&golden(), TighteningMode::MeanField, 0.0).unwrap();
        let t3 = tightened_zeta(&golden(), TighteningMode::Solver, 0.0).unwrap();
        assert_eq!(t1, -g_c);
        assert_eq!(t3, 2.0 * t1);
        assert_eq!(tightened_zeta(&golden(), TighteningMode::MeanField, 5.0).unwrap(), 5.0 - g_c);
        let far = BoundInputs { n_agents: usize::MAX / 2, ..golden() };
        assert!(tightened_zeta(&far, TighteningMode::Solver, 0.0).unwrap().abs() < 1e-7);
    }

    #[test]
    fn monotonicity() {
        let base = compute_bounds(&golden()).unwrap();
        let get = |i: &BoundInputs| compute_bounds(i).unwrap();
        let g = |o: BoundOutputs| (o.g_r.unwrap(), o.g_c.unwrap());
        let (br, bc) = g(base);
        let (r, c) = g(get(&BoundInputs { n_agents: 101, ..golden() }));
        assert!(r < br && c < bc);
        let probes = [
            BoundInputs { m_r: 1.01, ..golden() },
            BoundInputs { l_r: 0.11, ..golden() },
            BoundInputs { n_states: 11, ..golden() },
            BoundInputs { n_actions: 3, ..golden() },
        ];
        for p in probes {
            assert!(g(get(&p)).0 > br, "{p:?}");
        }
        let probes_c = [BoundInputs { m_c: 1.01, ..golden() }, BoundInputs { l_c: 0.11, ..golden() }];
        for p in probes_c {
            assert!(g(get(&p)).1 > bc, "{p:?}");
        }
    }

    #[test]
    fn action_independent_widths_are_smaller() {
        for l in [0.0, 0.05, 0.1, 0.2] {
            let o = compute_bounds(&BoundInputs { l_r: l, l_c: l, ..golden() }).unwrap();
            assert!(o.g_r0.unwrap() <= o.g_r.unwrap());
            assert!(o.g_c0.unwrap() <= o.g_c.unwrap());
        }
    }

    #[test]
    fn input_validation() {
        assert!(compute_bounds(&BoundInputs { zeta0: 0.5, ..golden() }).is_err());
        assert!(compute_bounds(&BoundInputs { gamma: 1.0, ..golden() }).is_err());
        assert!(compute_bounds(&BoundInputs { l_q: -1.0, ..golden() }).is_err());
        assert!(compute_bounds(&BoundInputs { n_agents: 0, ..golden() }).is_err());
    }
}
