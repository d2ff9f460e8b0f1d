"""
Configuration file for wallscale
Contains all default settings and the YAML run-config loader.
"""

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

# Base directory
BASE_DIR = Path(__file__).resolve().parent


# Application settings
class Config:
    """Base configuration class."""

    # Soft-regime margin and sweep margins
    Q_MAX = 0.05
    SWEEP_Q_MAX = 0.01
    SWEEP_LOWER_MARGIN = 2.0      # 2Q <= (t/d)^2
    SWEEP_UPPER_MARGIN = 0.5      # (t/d)^2 <= 0.5/Q

    # Admissibility tolerances
    NORM_TOL = 1e-12
    CLAMP_TOL = 1e-9

    # Truncation and grid policy
    L_MIN_OVER_T = 5.0
    C_TAIL = 2.0
    POINTS_PER_CORE = 8
    MAX_N1 = 524289
    MIN_N1 = 17
    MIN_N3 = 3
    MAX_N3 = 65
    NEEL_MAX_N3 = 5

    # Bloch construction
    BLOCH_DELTA = 0.1
    DELTA_CORE = 0.05
    BLOCH_HALF_WIDTH = 1.0        # cutoff w vanishes for |x1| >= 1 (units of t)

    # Relaxation
    MAX_ITERS = 5000
    GRAD_TOL = 1e-8
    INITIAL_STEP = 1.0
    ARMIJO_FACTOR = 0.5
    ARMIJO_C = 1e-4
    STALL_RATIO = 1e-14

    # Cross-over bisection
    BISECTION_REL_WIDTH = 0.02
    CROSSOVER_BRACKET = (1.0, 16.0)

    # Bound audits
    AUDIT_PERTURBATIONS = 100
    AUDIT_AMPLITUDE = 0.2
    AUDIT_VIOLATION_FACTOR = 10.0
    AUDIT_REFINEMENT_FACTOR = 2.0

    # Output
    CSV_FLOAT_FORMAT = '.10e'
    SVG_HASH_SALT = 'wallscale'
    DEFAULT_SEED = 20240229

    # Logging settings
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')
    LOG_FILE = os.environ.get('LOG_FILE') or None

    # Parallel sweep points
    WORKERS = int(os.environ.get('WALLSCALE_WORKERS', '1'))


class DevelopmentConfig(Config):
    """Development configuration."""
    LOG_LEVEL = 'DEBUG'


class ProductionConfig(Config):
    """Production configuration for long sweeps."""
    MAX_N1 = 1048577


class TestingConfig(Config):
    """Testing configuration: small grids and short relaxations."""
    MAX_N1 = 2049
    MAX_ITERS = 200
    AUDIT_PERTURBATIONS = 10
    LOG_LEVEL = 'WARNING'


# Configuration mapping
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': Config
}


def get_config(config_name=None):
    """Get configuration based on environment."""
    if config_name is None:
        config_name = os.environ.get('WALLSCALE_CONFIG', 'default')
    return config[config_name]


# Run configuration (YAML)

SECTION_KEYS = {
    'params': {'d', 'Q', 't'},
    'sweep': {'Q', 't_over_d', 'crossover_bracket', 'crossover_Q'},
    'grid': {'n1', 'n3', 'L', 'points_per_core', 'c_tail', 'max_n1', 'min_n3'},
    'construction': {'delta', 'mollify_width'},
    'relax': {'max_iters', 'grad_tol', 'initial_step', 'armijo_factor', 'armijo_c'},
    'output': {'dir', 'csv', 'svg', 'trace', 'field', 'png'},
    'audit': {'perturbations', 'amplitude', 'refine'},
}

TOP_LEVEL_KEYS = set(SECTION_KEYS) | {'seed', 'workers'}


@dataclass(frozen=True)
class RunConfig:
    """Parsed run configuration; sections are plain dictionaries of overrides."""

    params: Dict[str, float] = field(default_factory=dict)
    sweep: Dict[str, Any] = field(default_factory=dict)
    grid: Dict[str, Any] = field(default_factory=dict)
    construction: Dict[str, Any] = field(default_factory=dict)
    relax: Dict[str, Any] = field(default_factory=dict)
    output: Dict[str, Any] = field(default_factory=dict)
    audit: Dict[str, Any] = field(default_factory=dict)
    seed: int = Config.DEFAULT_SEED
    workers: int = 1
    source: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """Plain nested dictionary (source path excluded)."""
        data = {name: copy.deepcopy(getattr(self, name)) for name in SECTION_KEYS}
        data['seed'] = self.seed
        data['workers'] = self.workers
        return data

    def to_yaml(self) -> str:
        """Canonical YAML dump used in output headers."""
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)

    def with_overrides(self, section: str, **values) -> 'RunConfig':
        """Return a copy with keys of one section replaced."""
        data = self.to_dict()
        data[section] = {**data.get(section, {}), **{k: v for k, v in values.items() if v is not None}}
        return parse_run_config(data, source=self.source)


def parse_run_config(data: Optional[Dict[str, Any]], source: Optional[str] = None) -> RunConfig:
    """
    Validate a nested dictionary and build a RunConfig.

    Args:
        data: Parsed YAML content (None means all defaults)
        source: Path the content came from

    Returns:
        RunConfig instance
    """
    from modules.error_handler import ConfigError

    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("Run config must be a mapping at top level", "INVALID_CONFIG")

    unknown = set(data) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"Unknown config sections: {', '.join(sorted(unknown))}", "UNKNOWN_KEY")

    sections = {}
    for name, allowed in SECTION_KEYS.items():
        section = data.get(name) or {}
        if not isinstance(section, dict):
            raise ConfigError(f"Section '{name}' must be a mapping", "INVALID_CONFIG")
        bad = set(section) - allowed
        if bad:
            raise ConfigError(f"Unknown keys in '{name}': {', '.join(sorted(bad))}", "UNKNOWN_KEY")
        sections[name] = dict(section)

    for key in ('d', 'Q', 't'):
        if key in sections['params']:
            value = sections['params'][key]
            if not isinstance(value, (int, float)) or value <= 0:
                raise ConfigError(f"params.{key} must be a positive number", "INVALID_PARAMETER")
            sections['params'][key] = float(value)

    seed = data.get('seed', Config.DEFAULT_SEED)
    workers = data.get('workers', Config.WORKERS)
    if not isinstance(seed, int) or not isinstance(workers, int) or workers < 1:
        raise ConfigError("seed must be an integer and workers a positive integer", "INVALID_CONFIG")

    return RunConfig(seed=seed, workers=workers, source=source, **sections)


def load_run_config(path) -> RunConfig:
    """
    Load a YAML run configuration file.

    Args:
        path: Path to the YAML file

    Returns:
        RunConfig instance
    """
    from modules.error_handler import ConfigError

    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}", "CONFIG_IO")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"Malformed YAML in {path}: {e}", "PARSE_ERROR")
    return parse_run_config(data, source=str(path))
