//! Numeric tolerances and thresholds, pinned in one place. The `strict`
//! group tightens internal refinement effort; decision thresholds that
//! define verdicts are shared by both groups so results stay comparable.

#[derive(Debug, Clone)]
pub struct Tols {
    pub name: &'static str,
    /// Relative clustering tolerance for characteristic roots.
    pub root_cluster_rel: f64,
    /// Collocation rank test: eigenvalue accepted iff smin <= this * smax.
    pub spurious_rank_rel: f64,
    /// Newton stop: |step| <= this * (1 + |lambda|).
    pub newton_step_rel: f64,
    /// Deduplication radius, relative.
    pub dedup_rel: f64,
    /// Accepted distance of a winding sum from an integer.
    pub winding_integer_slack: f64,
    /// |Im lambda - line| below this counts as on the line.
    pub line_snap: f64,
    /// Distance band (line_snap, line_band] flags a straddling eigenvalue.
    pub line_band: f64,
    /// Widening of the scanned band beyond the critical strip edges.
    pub edge_margin: f64,
    /// Eigenvector residual bound, relative.
    pub eig_residual_rel: f64,
    /// |i lambda - nearest integer| tolerance for the integer-exponent test.
    pub integer_exponent_tol: f64,
    /// Relative residual threshold of the polynomial profile test.
    pub polynomial_residual_rel: f64,
    /// Relative residual for "solution polynomial up to kernel" decisions.
    pub monomial_poly_rel: f64,
    /// Orthogonality pairing threshold, relative.
    pub orthogonality_rel: f64,
    /// Rank tolerance of the differentiated-system decomposition.
    pub beta_rank_rel: f64,
    /// Residual certificate threshold for log-solution witnesses.
    pub witness_residual: f64,
    /// Residual threshold for power-solution certificates.
    pub certificate_residual: f64,
    /// Certificate passes when annulus ratio >= 1 + this.
    pub blowup_min_ratio: f64,
    /// Exact polynomial-trace consistency: |g(0)| <= this * scale.
    pub consistency_exact_tol: f64,
    /// Minimum fitted decay exponent for sampled-trace consistency.
    pub decay_exponent_min: f64,
    /// Partial integrals must stabilize within this fraction.
    pub integral_stabilize: f64,
    /// Admissibility solve residual threshold.
    pub admissible_residual: f64,
    /// Associated-vector least-squares residual threshold, relative.
    pub assoc_residual: f64,
    /// Cap diagnostic: min |normalized determinant| on |Re| = R.
    pub cap_min_abs: f64,
    /// Results within this factor of a threshold downgrade to Undetermined.
    pub near_threshold_factor: f64,
    /// Default collocation size.
    pub colloc_size: usize,
    /// Default half-width of the real-axis search window.
    pub re_halfwidth: f64,
}

impl Default for Tols {
    fn default() -> Self {
        Tols {
            name: "default",
            root_cluster_rel: 1e-8,
            spurious_rank_rel: 1e-8,
            newton_step_rel: 1e-12,
            dedup_rel: 1e-9,
            winding_integer_slack: 0.05,
            line_snap: 1e-7,
            line_band: 1e-6,
            edge_margin: 1e-3,
            eig_residual_rel: 1e-8,
            integer_exponent_tol: 1e-7,
            polynomial_residual_rel: 1e-7,
            monomial_poly_rel: 1e-6,
            orthogonality_rel: 1e-8,
            beta_rank_rel: 1e-10,
            witness_residual: 1e-7,
            certificate_residual: 1e-7,
            blowup_min_ratio: 1e-3,
            consistency_exact_tol: 1e-10,
            decay_exponent_min: 0.05,
            integral_stabilize: 0.01,
            admissible_residual: 1e-9,
            assoc_residual: 1e-6,
            cap_min_abs: 1e-3,
            near_threshold_factor: 10.0,
            colloc_size: 48,
            re_halfwidth: 10.0,
        }
    }
}

impl Tols {
    /// Tighter refinement effort; decision thresholds unchanged.
    pub fn strict() -> Self {
        Tols {
            name: "strict",
            newton_step_rel: 1e-13,
            winding_integer_slack: 0.01,
            colloc_size: 64,
            ..Tols::default()
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Tols::default()),
            "strict" => Some(Tols::strict()),
            _ => None,
        }
    }
}
