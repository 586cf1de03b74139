from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union, get_args, get_origin, get_type_hints

from dotenv import dotenv_values

from app.utils.errors import DataError, UsageError
from app.utils.logging_utils import setup_logging

logger = setup_logging(__name__)

INPUT_LAYERS = ("dpm", "flood", "wind", "footprint")
LABELS_FILENAME = "labels.csv"


def _parse_bool(key: str, value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise UsageError(f"Key '{key}' expects a boolean, got {value!r}.")


def _parse_batch_sizes(key: str, value: str) -> List[Optional[int]]:
    sizes: List[Optional[int]] = []
    for token in value.split(","):
        token = token.strip().lower()
        if not token:
            continue
        if token in ("full", "none"):
            sizes.append(None)
            continue
        try:
            sizes.append(int(token))
        except ValueError:
            raise UsageError(f"Key '{key}' expects comma separated integers or 'full', got {value!r}.")
    return sizes or [None]


@dataclass
class RunConfig:
    """
    Settings of one pipeline run.

    Loaded from a flat key=value file whose keys are exactly these field names, then
    overridden from the command line. Input layer paths left empty default to the files
    `simulate` writes into the output directory.
    """

    out: str = "output"
    seed: int = 0

    # Inputs
    dpm: Optional[str] = None
    flood: Optional[str] = None
    wind: Optional[str] = None
    footprint: Optional[str] = None
    labels: Optional[str] = None
    resample: str = "bilinear"

    # Synthetic scenario
    n_cells: int = 10_000
    footprint_fraction: float = 0.6

    # Optimizer
    method: str = "vi"
    prune: bool = True
    batch_size: Optional[int] = 256
    rho: float = 0.05
    max_epochs: int = 200
    elbo_rel_tol: float = 1e-5
    schedule: str = "constant"
    e_step_sweeps: int = 3
    m_step_backtracking: bool = True
    mcmc_samples: int = 300
    mcmc_burn_in: int = 150

    # Ablation
    ablation_batch_sizes: List[Optional[int]] = field(default_factory=lambda: [None])

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None) -> "RunConfig":
        """
        Build a RunConfig from an optional key=value file plus overrides.

        Raises:
            UsageError: On a missing config file, unknown keys or values of the wrong type.
        """
        values: Dict[str, Any] = {}
        if path is not None:
            if not Path(path).is_file():
                raise UsageError(f"Config file {path} does not exist.")
            values.update({key: value for key, value in dotenv_values(path).items() if value is not None})
        values.update({key: value for key, value in (overrides or {}).items() if value is not None})

        unknown = sorted(set(values) - set(cls.field_names()))
        if unknown:
            raise UsageError(f"Unknown configuration keys: {unknown}.")
        config = cls(**{key: cls._coerce(key, value) for key, value in values.items()})
        logger.debug(f"Run configuration loaded: {config}")
        return config

    @classmethod
    def _coerce(cls, key: str, value: Any) -> Any:
        if not isinstance(value, str):
            return value
        if key == "ablation_batch_sizes":
            return _parse_batch_sizes(key, value)
        hint = get_type_hints(cls)[key]
        optional = get_origin(hint) is Union and type(None) in get_args(hint)
        if optional:
            if value.strip().lower() in ("", "none", "full"):
                return None
            hint = next(arg for arg in get_args(hint) if arg is not type(None))
        try:
            if hint is bool:
                return _parse_bool(key, value)
            if hint is int:
                return int(value)
            if hint is float:
                return float(value)
        except ValueError:
            raise UsageError(f"Key '{key}' expects {hint.__name__}, got {value!r}.")
        return value.strip()

    def with_overrides(self, **changes: Any) -> "RunConfig":
        return replace(self, **{key: value for key, value in changes.items() if value is not None})

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def input_path(self, layer: str) -> Path:
        """Configured path of an input raster, or the simulated layer in the output directory."""
        configured = getattr(self, layer)
        return Path(configured) if configured else self.out_dir / f"{layer}.asc"

    def labels_path(self) -> Path:
        return Path(self.labels) if self.labels else self.out_dir / LABELS_FILENAME

    def check_inputs(self, with_labels: bool = False) -> None:
        """
        Raises:
            DataError: If a referenced input file is missing.
        """
        paths = [self.input_path(layer) for layer in INPUT_LAYERS]
        if with_labels:
            paths.append(self.labels_path())
        for path in paths:
            if not path.is_file():
                raise DataError("Input file does not exist.", str(path))

    def optimizer(self):
        """The OptimizerConfig these settings describe."""
        from app.inference.em import OptimizerConfig

        try:
            return OptimizerConfig(
                rho=self.rho,
                batch_size=self.batch_size,
                max_epochs=self.max_epochs,
                elbo_rel_tol=self.elbo_rel_tol,
                seed=self.seed,
                schedule=self.schedule,
                e_step_sweeps=self.e_step_sweeps,
                prune=self.prune,
                method=self.method,
                m_step_backtracking=self.m_step_backtracking,
                mcmc_samples=self.mcmc_samples,
                mcmc_burn_in=self.mcmc_burn_in,
            )
        except ValueError as e:
            raise UsageError(f"Invalid optimizer settings: {e}")
