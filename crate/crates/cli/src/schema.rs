//! Structural and semantic checks on a `single` report document.

use vlc_secure_ee::design::dinkelbach::EPS_FEAS;
use vlc_secure_ee::SolveStatus;

use crate::error::CliError;
use crate::single::SingleOutput;

/// Parses a report and checks it against its own configuration.
pub fn validate_single_report(text: &str) -> Result<SingleOutput, CliError> {
    let out: SingleOutput = serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
    let fail = |m: String| Err(CliError::Schema(m));
    let p = &out.provenance;
    if p.config_sha256 != out.config.hash() {
        return fail("config_sha256 does not match the embedded configuration".into());
    }
    if p.git_describe.is_empty() || p.seed != out.config.seed {
        return fail("provenance is incomplete or disagrees with the configuration".into());
    }
    let (n_leds, k) = (out.channel.n_leds(), out.channel.n_users());
    let r = &out.report;
    if out.config.scenario.n_leds() != n_leds || out.config.scenario.users.count != k || out.lambda.len() != k {
        return fail("channel dimensions disagree with the scenario".into());
    }
    if r.w_star.n_leds() != n_leds || r.w_star.n_users() != k || r.per_user_secrecy.len() != k {
        return fail("precoder or per-user vectors have the wrong shape".into());
    }
    if r.ee_trace.is_empty() || r.ee_trace.iter().any(|v| !v.is_finite()) {
        return fail("efficiency trace is empty or not finite".into());
    }
    if (r.mu_star - r.sum_rate / r.total_power).abs() > 1e-12 * r.mu_star.abs().max(1.0) {
        return fail("mu_star is not sum_rate / total_power".into());
    }
    if r.status == SolveStatus::Converged {
        if r.per_user_secrecy.iter().zip(&out.lambda).any(|(s, l)| *s < l - EPS_FEAS) {
            return fail("converged report misses a secrecy threshold".into());
        }
        if r.amplitude_residual > EPS_FEAS {
            return fail("converged report violates the amplitude budget".into());
        }
        if r.dinkelbach_residual.abs() > out.config.scenario.solver.eps_dinkelbach {
            return fail("converged report has a Dinkelbach residual above tolerance".into());
        }
    }
    Ok(out)
}
