"""Resolved run configuration: built-in defaults < TOML file < command-line flags.

The configuration file is flat TOML whose keys are the long flag names with
dashes replaced by underscores, e.g.::

    T = 1.2
    q = 0.9
    kernel_size = 127
    seed = 7
"""

import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from nightglow.apsf import ApsfParams
from nightglow.enhance import EnhanceParams
from nightglow.errors import ParameterError
from nightglow.glow import GlowRecipe
from nightglow.gradops import BilateralParams
from nightglow.lightsource import MattingConfig


@dataclass(frozen=True)
class Config:
    # apsf
    T: float = 1.2
    q: float = 0.9
    terms: int = 200
    angles: int = 721
    kernel_size: int = 127
    lut: str = None
    # light sources / matting
    tau: float = 0.8
    matting_window: int = 3
    matting_eps: float = 1e-7
    matting_lambda: float = 100.0
    cg_tol: float = 1e-6
    cg_max_iter: int = 2000
    half_resolution: bool = None
    # glow
    noise_sigma: float = 0.01
    alpha_noise_scale: float = 0.05
    clean_scale: float = 0.99
    seed: int = 0
    conv_mode: str = "auto"
    jobs: int = 1
    # bilateral
    alpha1: float = 0.02
    alpha2: float = None
    radius: int = 5
    # enhancement
    gamma: float = 0.3
    smooth_radius: int = 16
    guided_eps: float = 1e-3

    def apsf_params(self) -> ApsfParams:
        return ApsfParams(T=self.T, q=self.q, num_terms=self.terms, num_angles=self.angles)

    def matting(self) -> MattingConfig:
        return MattingConfig(
            window=self.matting_window,
            eps=self.matting_eps,
            lam=self.matting_lambda,
            cg_tol=self.cg_tol,
            cg_max_iter=self.cg_max_iter,
            half_resolution=self.half_resolution,
        )

    def recipe(self) -> GlowRecipe:
        return GlowRecipe(
            apsf=self.apsf_params(),
            kernel_size=self.kernel_size,
            tau=self.tau,
            alpha_noise_scale=self.alpha_noise_scale,
            clean_scale=self.clean_scale,
            noise_sigma=self.noise_sigma,
            seed=self.seed,
            matting=self.matting(),
            conv_mode=self.conv_mode,
        )

    def bilateral(self) -> BilateralParams:
        return BilateralParams(alpha1=self.alpha1, alpha2=self.alpha2, radius=self.radius)

    def enhance(self) -> EnhanceParams:
        return EnhanceParams(gamma=self.gamma, smooth_radius=self.smooth_radius, guided_eps=self.guided_eps)

    def validate(self) -> "Config":
        """Construct every owning parameter object so invariants fail early."""
        self.recipe()
        self.bilateral()
        self.enhance()
        if not 0 <= self.tau <= 1:
            raise ParameterError("tau must be in [0, 1]")
        if self.jobs < 1:
            raise ParameterError("jobs must be >= 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def _coerce(key, value):
    kind = FIELD_TYPES[key]
    if value is None:
        return None
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ParameterError(f"config key {key!r} expects {kind.__name__}, got {value!r}") from None


def load_config_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ParameterError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ParameterError(f"config {path}: {exc}") from exc
    unknown = sorted(set(data) - set(FIELD_TYPES))
    if unknown:
        raise ParameterError(f"config {path}: unknown keys {', '.join(unknown)}")
    return {k: _coerce(k, v) for k, v in data.items()}


def resolve_config(config_path=None, overrides: dict = None) -> Config:
    """Merge file values and flag overrides (``None`` means 'not given') onto defaults."""
    values = {}
    if config_path is not None:
        values.update(load_config_file(Path(config_path)))
    for key, value in (overrides or {}).items():
        if value is not None and key in FIELD_TYPES:
            values[key] = _coerce(key, value)
    return replace(Config(), **values).validate()
