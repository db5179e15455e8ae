"""
Experiment Validation
Catches grid, mollifier and exponent problems before an experiment runs
"""

from typing import Dict, List

from .config import ExperimentConfig
from .core import FracParams, critical_exponents
from .kernel import GAUSSIAN_TRUNCATION

GRID_EXPERIMENTS = {"duality_convergence"}
LARGE_RESOLUTION = {2: 512, 3: 128}


class ExperimentValidator:
    """Cross-field checks on an ExperimentConfig that pydantic cannot express"""

    def __init__(self):
        self.issues: List[str] = []
        self.warnings: List[str] = []

    def validate_config(self, config: ExperimentConfig) -> Dict[str, List[str]]:
        """
        Comprehensive config validation
        Returns dict with 'errors', 'warnings', and 'suggestions'
        """
        self.issues = []
        self.warnings = []
        params = config.frac_params()

        if config.experiment in GRID_EXPERIMENTS:
            self._validate_schedule(config)
            self._validate_box(config)
        self._validate_resolution(config)
        self._validate_exponents(config, params)
        self._validate_excision(config)

        return {
            "errors": self.issues,
            "warnings": self.warnings,
            "suggestions": self._generate_suggestions(config, params),
        }

    def _validate_schedule(self, config: ExperimentConfig):
        """Mollifier levels must be decreasing and resolved by the grid"""
        bandwidths = config.mollifier.bandwidths
        resolutions = config.grid.resolutions
        if len(bandwidths) < 3:
            self.issues.append(f"duality_convergence needs at least 3 mollifier levels, got {len(bandwidths)}")
        if any(b >= a for a, b in zip(bandwidths[:-1], bandwidths[1:])):
            self.issues.append(f"Mollifier bandwidths must be strictly decreasing: {bandwidths}")
        if len(resolutions) not in (1, len(bandwidths)):
            self.issues.append(
                f"Give one grid resolution or one per level ({len(bandwidths)}), got {len(resolutions)}"
            )
            return
        per_level = resolutions * len(bandwidths) if len(resolutions) == 1 else resolutions
        for level, (eps, n) in enumerate(zip(bandwidths, per_level), 1):
            h = 2.0 * config.grid.half_width / n
            if eps < 2 * h:
                self.issues.append(
                    f"Level {level}: bandwidth {eps:g} is below two grid cells (h = {h:.4g})"
                )

    def _validate_box(self, config: ExperimentConfig):
        """The box must hold every mollified atom"""
        reach = max(config.mollifier.bandwidths)
        if config.mollifier.profile == "gaussian_truncated":
            reach *= GAUSSIAN_TRUNCATION
        atoms = config.measure().points
        extent = float(abs(atoms).max()) if atoms.size else 0.0
        if extent + reach > config.grid.half_width:
            self.issues.append(
                f"Grid half width {config.grid.half_width:g} does not contain the mollified measure "
                f"(atom extent {extent:g} + mollifier support {reach:g})"
            )
        if config.excision.radius > config.grid.half_width:
            self.issues.append(
                f"Norm ball radius {config.excision.radius:g} exceeds the grid half width"
            )

    def _validate_resolution(self, config: ExperimentConfig):
        limit = LARGE_RESOLUTION.get(config.dim, 64)
        largest = max(config.grid.resolutions)
        if largest > limit:
            self.warnings.append(
                f"Resolution {largest} per axis in {config.dim}D is far above desk scale (>{limit}); "
                f"expect long run times"
            )

    def _validate_exponents(self, config: ExperimentConfig, params: FracParams):
        """Super-critical exponents are allowed but flagged: they are expected to diverge"""
        critical = critical_exponents(params)
        for r in config.lebesgue_exponents:
            if r >= critical.r_star:
                self.warnings.append(
                    f"Lebesgue exponent r={r:g} >= r_star={critical.r_star:.6g}: expected to diverge"
                )
        for q in config.sobolev_exponents:
            if q >= critical.q_star:
                self.warnings.append(
                    f"Sobolev exponent q={q:g} >= q_star={critical.q_star:.6g}: expected to diverge"
                )
            if critical.eta_of(q) <= 0:
                self.issues.append(f"Sobolev exponent q={q:g} gives eta={critical.eta_of(q):.4g} <= 0")

    def _validate_excision(self, config: ExperimentConfig):
        if config.excision.radius > config.support_radius and config.experiment == "regularity_sweep":
            self.warnings.append(
                "Norm ball is larger than the measure support; several atoms may fall inside it"
            )

    def _generate_suggestions(self, config: ExperimentConfig, params: FracParams) -> List[str]:
        """Generate improvement suggestions"""
        suggestions = []
        if config.experiment in GRID_EXPERIMENTS and len(config.mollifier.bandwidths) == 3:
            suggestions.append("Consider a 4th mollifier level to see the Cauchy differences settle")
        if config.experiment in ("fundamental_solution", "regularity_sweep") and config.excision.levels < 6:
            suggestions.append("Consider at least 6 excision levels for a stable divergence rate")
        return suggestions

    def print_validation_report(self, validation_result: Dict[str, List[str]]):
        """Print a formatted validation report"""
        print("🔍 Experiment Validation Report")
        print("=" * 50)

        if validation_result["errors"]:
            print("❌ ERRORS (Must Fix):")
            for error in validation_result["errors"]:
                print(f"   • {error}")
            print()

        if validation_result["warnings"]:
            print("⚠️  WARNINGS:")
            for warning in validation_result["warnings"]:
                print(f"   • {warning}")
            print()

        if validation_result["suggestions"]:
            print("💡 SUGGESTIONS:")
            for suggestion in validation_result["suggestions"]:
                print(f"   • {suggestion}")
            print()

        if not any(validation_result.values()):
            print("✅ No issues found!")


def validate_before_run(config: ExperimentConfig, verbose: bool = True) -> bool:
    """
    Validate and report
    Returns True if safe to proceed, False if errors exist
    """
    validator = ExperimentValidator()
    result = validator.validate_config(config)
    if verbose:
        validator.print_validation_report(result)

    return len(result["errors"]) == 0
