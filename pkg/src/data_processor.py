"""
File formats for instances, arm sets, agent graphs, partitions and sweep configs.

This module loads and saves every document the command line reads or writes,
translating malformed input into ConfigError / InvalidInstanceError with the
offending path in the message.
"""

import json
import logging
import os
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

try:
    from .bandit_core import RngStream, make_instance
    from .experiments import gen_random_sphere_instance, gen_standard_instance
    from .models import (
        AgentGraph, AlgorithmKind, ConfigError, GraphSpec, InstanceFamily,
        InvalidInstanceError, LinearBanditInstance, Partition, SweepConfig,
    )
    from .topology import make_graph
except ImportError:
    from bandit_core import RngStream, make_instance
    from experiments import gen_random_sphere_instance, gen_standard_instance
    from models import (
        AgentGraph, AlgorithmKind, ConfigError, GraphSpec, InstanceFamily,
        InvalidInstanceError, LinearBanditInstance, Partition, SweepConfig,
    )
    from topology import make_graph


logger = logging.getLogger(__name__)


class BanditDataProcessor:
    """Reads and writes the toolkit's file formats."""

    GRID_FIELDS = ("d", "delta", "K", "M", "T")
    SWEEP_FIELDS = {
        "algorithm", "family", "d", "delta", "K", "M", "T", "trials", "master_seed",
        "noise_std", "epsilon", "instance_path", "graph",
    }
    SPEC_KEYS = {
        "std": {"d", "delta", "noise"},
        "sphere": {"d", "K", "seed", "noise"},
    }

    def _read_json(self, file_path: str) -> Any:
        try:
            with open(file_path, "r", encoding="utf-8") as fh:
                return json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"file not found: {file_path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"{file_path} is not valid JSON: {e}")

    def _write_json(self, data: Any, file_path: str) -> None:
        with open(file_path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2)
            fh.write("\n")

    # -- instances ---------------------------------------------------------

    def load_instance(self, file_path: str) -> LinearBanditInstance:
        """
        Load an instance document ``{"arms": [[...]], "theta": [...], "noise_std": s}``.

        Raises:
            ConfigError: If the file is missing, not JSON, or lacks a field.
            InvalidInstanceError: If the instance itself is invalid.
        """
        doc = self._read_json(file_path)
        if not isinstance(doc, dict) or "arms" not in doc or "theta" not in doc:
            raise ConfigError(f"{file_path}: an instance needs 'arms' and 'theta'")
        try:
            return make_instance(doc["arms"], doc["theta"], float(doc.get("noise_std", 1.0)))
        except InvalidInstanceError as e:
            raise InvalidInstanceError(f"{file_path}: {e.message}")

    def save_instance(self, inst: LinearBanditInstance, file_path: str) -> None:
        self._write_json(inst.to_dict(), file_path)

    def load_arms_csv(self, file_path: str) -> np.ndarray:
        """
        Load an arm matrix from a headerless CSV, one arm per row.

        Raises:
            ConfigError: If the file is missing, empty, ragged or non-numeric.
        """
        try:
            df = pd.read_csv(file_path, header=None, skipinitialspace=True)
        except FileNotFoundError:
            raise ConfigError(f"arm file not found: {file_path}")
        except pd.errors.EmptyDataError:
            raise ConfigError(f"arm file is empty: {file_path}")
        except pd.errors.ParserError as e:
            raise ConfigError(f"{file_path}: rows have different lengths: {e}")

        try:
            df = df.apply(pd.to_numeric, errors="raise")
        except (ValueError, TypeError):
            raise ConfigError(f"{file_path}: arm entries must be numeric")
        if df.isna().any().any():
            raise ConfigError(f"{file_path}: missing entries")
        return df.to_numpy(dtype=float)

    def parse_instance_spec(self, spec: str) -> LinearBanditInstance:
        """
        Resolve an instance argument: a generator spec or a JSON file path.

        Generator specs are ``std:d=10,delta=0.3[,noise=1]`` and
        ``sphere:d=10,K=100[,seed=0][,noise=1]``.

        Raises:
            ConfigError: On an unknown generator, unknown or missing keys, or
                non-numeric values.
        """
        family, sep, rest = spec.partition(":")
        if not sep or family not in self.SPEC_KEYS:
            if os.path.exists(spec):
                return self.load_instance(spec)
            raise ConfigError(f"'{spec}' is neither an instance file nor a std:/sphere: spec")

        values: Dict[str, float] = {}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, eq, raw = item.partition("=")
            if not eq or key not in self.SPEC_KEYS[family]:
                raise ConfigError(f"unknown {family} spec key in '{item}'")
            try:
                values[key] = float(raw)
            except ValueError:
                raise ConfigError(f"'{key}' must be numeric, got '{raw}'")

        for key in ("d", "K", "seed"):
            if key in values and not values[key].is_integer():
                raise ConfigError(f"'{key}' must be an integer, got {values[key]:g}")

        noise = values.get("noise", 1.0)
        try:
            if family == "std":
                if "d" not in values or "delta" not in values:
                    raise ConfigError("std spec needs d and delta")
                return gen_standard_instance(int(values["d"]), values["delta"], noise)
            if "d" not in values or "K" not in values:
                raise ConfigError("sphere spec needs d and K")
            rng = RngStream(int(values.get("seed", 0)))
            return gen_random_sphere_instance(int(values["d"]), int(values["K"]), rng, noise)
        except ValueError as e:
            raise ConfigError(f"invalid {family} spec '{spec}': {e}")

    # -- graphs and partitions ---------------------------------------------

    def load_graph(self, file_path: str) -> AgentGraph:
        """
        Load an edge list: an ``n <count>`` header, then one ``u v`` pair per line.

        Blank lines and ``#`` comments are ignored.

        Raises:
            ConfigError: If the header is missing or a line is malformed.
        """
        try:
            with open(file_path, "r", encoding="utf-8") as fh:
                lines = [ln.split("#", 1)[0].strip() for ln in fh]
        except FileNotFoundError:
            raise ConfigError(f"graph file not found: {file_path}")
        lines = [ln for ln in lines if ln]
        if not lines:
            raise ConfigError(f"graph file is empty: {file_path}")

        header = lines[0].split()
        if len(header) != 2 or header[0] != "n" or not header[1].isdigit():
            raise ConfigError(f"{file_path}: first line must be 'n <count>', got '{lines[0]}'")
        n = int(header[1])

        edges: List[Tuple[int, int]] = []
        for ln in lines[1:]:
            parts = ln.split()
            if len(parts) != 2 or not all(p.isdigit() for p in parts):
                raise ConfigError(f"{file_path}: malformed edge line '{ln}'")
            edges.append((int(parts[0]), int(parts[1])))
        try:
            return make_graph(n, edges)
        except ValueError as e:
            raise ConfigError(f"{file_path}: {e}")

    def save_graph(self, g: AgentGraph, file_path: str) -> None:
        with open(file_path, "w", encoding="utf-8") as fh:
            fh.write(f"n {g.n}\n")
            for u, v in sorted(g.edges):
                fh.write(f"{u} {v}\n")

    def load_partition(self, file_path: str) -> Partition:
        """Load ``{"blocks": [[...]], "hubs": [...]}``; validity is checked by the caller."""
        doc = self._read_json(file_path)
        try:
            return Partition(
                blocks=tuple(tuple(int(v) for v in block) for block in doc["blocks"]),
                hubs=tuple(int(h) for h in doc["hubs"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"{file_path}: malformed partition: {e}")

    def save_partition(self, p: Partition, file_path: str) -> None:
        self._write_json(p.to_dict(), file_path)

    # -- sweep configs -----------------------------------------------------

    def _grid(self, doc: Dict[str, Any], name: str, default: Tuple, cast) -> Tuple:
        raw = doc.get(name, list(default))
        if not isinstance(raw, list):
            raw = [raw]
        try:
            return tuple(cast(x) for x in raw)
        except (TypeError, ValueError):
            raise ConfigError(f"grid '{name}' must hold numbers, got {raw}")

    def load_sweep_config(self, file_path: str) -> SweepConfig:
        """
        Load a sweep config. Grid parameters accept a scalar or a list.

        Relative instance and graph paths are resolved against the config's
        directory.

        Raises:
            ConfigError: On unknown fields, bad enum values or non-numeric grids.
        """
        doc = self._read_json(file_path)
        if not isinstance(doc, dict):
            raise ConfigError(f"{file_path}: a sweep config must be a JSON object")
        unknown = set(doc) - self.SWEEP_FIELDS
        if unknown:
            raise ConfigError(f"{file_path}: unknown fields {sorted(unknown)}")

        base = os.path.dirname(os.path.abspath(file_path))

        def resolve(path):
            return None if path is None else os.path.join(base, path)

        try:
            algorithm = AlgorithmKind(doc.get("algorithm", "star"))
            family = InstanceFamily(doc.get("family", "standard"))
        except ValueError as e:
            raise ConfigError(f"{file_path}: {e}")

        g = doc.get("graph")
        if g is not None and not isinstance(g, dict):
            raise ConfigError(f"{file_path}: 'graph' must be an object")

        defaults = SweepConfig(algorithm=algorithm, family=family)
        try:
            graph = None if g is None else GraphSpec(
                kind=str(g.get("kind", "star")),
                p=float(g.get("p", 0.2)),
                path=resolve(g.get("path")),
                partition_path=resolve(g.get("partition_path")),
            )
            return SweepConfig(
                algorithm=algorithm,
                family=family,
                d=self._grid(doc, "d", defaults.d, int),
                delta=self._grid(doc, "delta", defaults.delta, float),
                K=self._grid(doc, "K", defaults.K, int),
                M=self._grid(doc, "M", defaults.M, int),
                T=self._grid(doc, "T", defaults.T, int),
                trials=int(doc.get("trials", defaults.trials)),
                master_seed=int(doc.get("master_seed", defaults.master_seed)),
                noise_std=float(doc.get("noise_std", defaults.noise_std)),
                epsilon=float(doc.get("epsilon", defaults.epsilon)),
                instance_path=resolve(doc.get("instance_path")),
                graph=graph,
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{file_path}: {e}")
