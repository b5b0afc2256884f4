"""
Configuration handler for YAML-based laboratory settings.

Recognised keys (all optional):
- quadrature: abs_tol, rel_tol, truncation, limit
- contour: nodes, max_doublings
- budget: tree_max_n, animal_max_n, series_max_entries
- mc: seed, samples, acceptance_floor
- threads: worker processes for sharded enumeration and sampling
- output_dir: where results and manifests are written

The default output directory can also come from ISE_LAB_OUTPUT_DIR
(flag > config file > environment > built-in default).
"""

import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from genfun import ContourSpec
from ise_numerics import QuadratureSpec
from lab_errors import InvalidArgumentError

OUTPUT_ENV_VAR = 'ISE_LAB_OUTPUT_DIR'
DEFAULT_OUTPUT_DIR = 'output'


class LabConfig:
    """Settings shared by every subcommand."""

    def __init__(
        self,
        abs_tol: float = 1e-10,
        rel_tol: float = 1e-10,
        truncation: float = 10.0,
        quad_limit: int = 200,
        contour_nodes: int = 1024,
        contour_max_doublings: int = 6,
        tree_max_n: int = 10,
        animal_max_n: int = 8,
        series_max_entries: int = 2_000_000,
        seed: int = 20240101,
        samples: int = 1000,
        acceptance_floor: float = 1e-4,
        threads: int = 1,
        output_dir: Optional[str] = None
    ):
        self.abs_tol = abs_tol
        self.rel_tol = rel_tol
        self.truncation = truncation
        self.quad_limit = quad_limit
        self.contour_nodes = contour_nodes
        self.contour_max_doublings = contour_max_doublings
        self.tree_max_n = tree_max_n
        self.animal_max_n = animal_max_n
        self.series_max_entries = series_max_entries
        self.seed = seed
        self.samples = samples
        self.acceptance_floor = acceptance_floor
        self.threads = threads
        self.output_dir = output_dir

        if threads < 1:
            raise InvalidArgumentError(f"threads must be >= 1, got {threads}")

    @classmethod
    def from_yaml_file(cls, yaml_path: Path) -> 'LabConfig':
        """
        Load configuration from a YAML file.

        Args:
            yaml_path: Path to the YAML configuration file

        Returns:
            LabConfig with file values over the defaults

        Raises:
            FileNotFoundError: If YAML file doesn't exist
            yaml.YAMLError: If YAML parsing fails
            InvalidArgumentError: If the top level is not a mapping
        """
        if not yaml_path.exists():
            raise FileNotFoundError(f"YAML config file not found: {yaml_path}")

        with open(yaml_path, 'r') as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise InvalidArgumentError(f"config file must hold a mapping: {yaml_path}")

        quadrature = data.get('quadrature') or {}
        contour = data.get('contour') or {}
        budget = data.get('budget') or {}
        mc = data.get('mc') or {}
        defaults = cls()

        return cls(
            abs_tol=float(quadrature.get('abs_tol', defaults.abs_tol)),
            rel_tol=float(quadrature.get('rel_tol', defaults.rel_tol)),
            truncation=float(quadrature.get('truncation', defaults.truncation)),
            quad_limit=int(quadrature.get('limit', defaults.quad_limit)),
            contour_nodes=int(contour.get('nodes', defaults.contour_nodes)),
            contour_max_doublings=int(contour.get('max_doublings', defaults.contour_max_doublings)),
            tree_max_n=int(budget.get('tree_max_n', defaults.tree_max_n)),
            animal_max_n=int(budget.get('animal_max_n', defaults.animal_max_n)),
            series_max_entries=int(budget.get('series_max_entries', defaults.series_max_entries)),
            seed=int(mc.get('seed', defaults.seed)),
            samples=int(mc.get('samples', defaults.samples)),
            acceptance_floor=float(mc.get('acceptance_floor', defaults.acceptance_floor)),
            threads=int(data.get('threads', defaults.threads)),
            output_dir=data.get('output_dir')
        )

    @classmethod
    def from_path(cls, yaml_path: Optional[Path]) -> 'LabConfig':
        """
        Load configuration from an optional YAML path.

        Args:
            yaml_path: Config file, or None for defaults

        Returns:
            LabConfig instance (either from YAML or defaults)
        """
        if yaml_path is None:
            return cls()
        return cls.from_yaml_file(Path(yaml_path))

    def resolve_output_dir(self, flag_value: Optional[str] = None) -> Path:
        """Pick the output directory: flag, then config file, then environment, then default."""
        if flag_value:
            return Path(flag_value)
        if self.output_dir:
            return Path(self.output_dir)
        load_dotenv()
        return Path(os.getenv(OUTPUT_ENV_VAR) or DEFAULT_OUTPUT_DIR)

    def quadrature_spec(self) -> QuadratureSpec:
        return QuadratureSpec(abs_tol=self.abs_tol, rel_tol=self.rel_tol,
                              truncation=self.truncation, limit=self.quad_limit)

    def contour_spec(self) -> ContourSpec:
        return ContourSpec(nodes=self.contour_nodes, max_doublings=self.contour_max_doublings)

    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to the nested YAML layout."""
        return {
            'quadrature': {
                'abs_tol': self.abs_tol,
                'rel_tol': self.rel_tol,
                'truncation': self.truncation,
                'limit': self.quad_limit,
            },
            'contour': {
                'nodes': self.contour_nodes,
                'max_doublings': self.contour_max_doublings,
            },
            'budget': {
                'tree_max_n': self.tree_max_n,
                'animal_max_n': self.animal_max_n,
                'series_max_entries': self.series_max_entries,
            },
            'mc': {
                'seed': self.seed,
                'samples': self.samples,
                'acceptance_floor': self.acceptance_floor,
            },
            'threads': self.threads,
            'output_dir': self.output_dir,
        }

    def __repr__(self) -> str:
        return (f"LabConfig(quad_tol={self.abs_tol:g}/{self.rel_tol:g}, truncation={self.truncation}, "
                f"tree_max_n={self.tree_max_n}, animal_max_n={self.animal_max_n}, seed={self.seed}, "
                f"samples={self.samples}, threads={self.threads})")
