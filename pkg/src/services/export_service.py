"""Export service for solver results and experiment data (CSV)."""
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.models.plans import OffloadDecision, TrajectoryPlan
from src.models.reports import SolveReport
from src.models.uncertainty import Distribution, SampleSpace
from src.utils.exceptions import ValidationError
from src.utils.units import bits_to_mbit, mbit_to_bits

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FLOAT_FORMAT = "%.10g"


def _read_csv(path: PathLike, columns: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    try:
        df = pd.read_csv(path)
    except FileNotFoundError as e:
        raise ValidationError(f"File not found: {path}") from e
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise ValidationError(f"{path} is not a readable CSV file: {e}") from e
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ValidationError(f"{path} is missing columns: {', '.join(missing)}")
    return df


class ExportService:
    """Service for writing and reading result tables."""

    @staticmethod
    def write_table(df: pd.DataFrame, path: PathLike) -> Path:
        """
        Write a table with fixed float formatting and line endings.

        Args:
            df: Table to write
            path: Destination file (parent directories are created)

        Returns:
            Path written
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.debug(f"[export] {path} ({len(df)} rows)")
        return path

    def write_objective(self, report: SolveReport, path: PathLike, eps: float, quota: int) -> Path:
        num_gus = report.decisions.shape[0]
        df = pd.DataFrame([{
            "method": report.method,
            "I": num_gus,
            "eps": eps,
            "quota": quota,
            "objective": report.objective,
            "wall_time": report.wall_time,
            "converged": report.converged,
            "outer_iters": report.outer_iters,
            "benders_iters": report.benders_iters,
            "sca_iters": report.sca_iters,
            "side_relaxed": report.side_relaxed,
        }])
        return self.write_table(df, path)

    def write_bounds(self, report: SolveReport, path: PathLike) -> Path:
        """One row per Benders iteration: outer round, iteration, UB, LB, cuts, SCA iterations."""
        columns = ["outer", "iteration", "upper_bound", "lower_bound", "cuts", "sca_iters"]
        df = pd.DataFrame([[getattr(row, c) for c in columns] for row in report.bound_log], columns=columns)
        return self.write_table(df, path)

    def write_decisions(self, dec: OffloadDecision, path: PathLike) -> Path:
        """Every (i, j, n) entry of the decision tensors; ``n`` is the 1-based slot."""
        i, j, n = np.indices(dec.shape)
        df = pd.DataFrame({
            "i": i.ravel(),
            "j": j.ravel(),
            "n": n.ravel() + 1,
            "x": dec.x.ravel(),
            "y": dec.y.ravel(),
            "z": dec.z.ravel(),
        })
        return self.write_table(df, path)

    @staticmethod
    def read_decisions(path: PathLike) -> OffloadDecision:
        df = _read_csv(path, ["i", "j", "n", "x", "y", "z"])
        shape = (int(df["i"].max()) + 1, int(df["j"].max()) + 1, int(df["n"].max()))
        y = np.zeros(shape, dtype=np.int8)
        z = np.zeros(shape, dtype=np.int8)
        index = (df["i"].to_numpy(), df["j"].to_numpy(), df["n"].to_numpy() - 1)
        y[index] = df["y"].to_numpy()
        z[index] = df["z"].to_numpy()
        dec = OffloadDecision.from_yz(y, z)
        if not np.array_equal(dec.x[index], df["x"].to_numpy()):
            raise ValidationError(f"{path}: x differs from y + z")
        return dec

    def write_trajectory(self, traj: TrajectoryPlan, path: PathLike) -> Path:
        """Waypoints 0..N of every UAV (0 = start, N = end)."""
        j, n = np.indices(traj.waypoints.shape[:2])
        df = pd.DataFrame({
            "j": j.ravel(),
            "n": n.ravel(),
            "x_m": traj.waypoints[..., 0].ravel(),
            "y_m": traj.waypoints[..., 1].ravel(),
        })
        return self.write_table(df, path)

    @staticmethod
    def read_trajectory(path: PathLike) -> TrajectoryPlan:
        df = _read_csv(path, ["j", "n", "x_m", "y_m"])
        num_uavs = int(df["j"].max()) + 1
        num_points = int(df["n"].max()) + 1
        if len(df) != num_uavs * num_points:
            raise ValidationError(f"{path}: expected {num_uavs * num_points} waypoints, found {len(df)}")
        wp = np.zeros((num_uavs, num_points, 2))
        wp[df["j"].to_numpy(), df["n"].to_numpy(), 0] = df["x_m"].to_numpy()
        wp[df["j"].to_numpy(), df["n"].to_numpy(), 1] = df["y_m"].to_numpy()
        return TrajectoryPlan(wp)

    def write_distributions(self, dists: Sequence[Distribution], space: SampleSpace, path: PathLike) -> Path:
        rows = [
            {"i": i, "k": k, "value_mbit": bits_to_mbit(space.values[k]), "prob": float(d.probs[k])}
            for i, d in enumerate(dists)
            for k in range(space.size)
        ]
        return self.write_table(pd.DataFrame(rows, columns=["i", "k", "value_mbit", "prob"]), path)

    def write_history(self, samples: np.ndarray, path: PathLike) -> Path:
        """Historical sizes, one column per GU, in Mbit."""
        samples = np.asarray(samples, dtype=float)
        df = pd.DataFrame({f"gu_{i}": bits_to_mbit(samples[i]) for i in range(samples.shape[0])})
        return self.write_table(df, path)

    @staticmethod
    def read_history(path: PathLike, num_gus: Optional[int] = None) -> np.ndarray:
        """
        Read a history file.

        Args:
            path: CSV with columns gu_0 .. gu_{I-1} in Mbit
            num_gus: Expected GU count, checked when given

        Returns:
            (I, Q) sizes in bits

        Raises:
            ValidationError: If the file is unreadable, has the wrong columns or bad values
        """
        df = _read_csv(path, [])
        expected = [f"gu_{i}" for i in range(len(df.columns))]
        if list(df.columns) != expected:
            raise ValidationError(f"{path}: history columns must be {', '.join(expected)}")
        if num_gus is not None and len(df.columns) != num_gus:
            raise ValidationError(f"{path}: history has {len(df.columns)} GUs, scenario has {num_gus}")
        values = df.to_numpy(dtype=float).T
        if values.shape[1] < 1 or not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValidationError(f"{path}: history needs at least one positive finite sample per GU")
        return mbit_to_bits(values)

    def write_datasets(self, datasets: Sequence[np.ndarray], path: PathLike) -> Path:
        """Realized (I, N) size tables in long form; ``n`` is the 1-based slot."""
        frames = []
        for d, table in enumerate(datasets):
            i, n = np.indices(table.shape)
            frames.append(pd.DataFrame({
                "dataset": d,
                "i": i.ravel(),
                "n": n.ravel() + 1,
                "size_mbit": bits_to_mbit(np.asarray(table, dtype=float).ravel()),
            }))
        df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=["dataset", "i", "n", "size_mbit"])
        return self.write_table(df, path)

    @staticmethod
    def read_datasets(path: PathLike) -> List[np.ndarray]:
        df = _read_csv(path, ["dataset", "i", "n", "size_mbit"])
        datasets = []
        for _, part in df.groupby("dataset", sort=True):
            shape = (int(part["i"].max()) + 1, int(part["n"].max()))
            table = np.full(shape, np.nan)
            table[part["i"].to_numpy(), part["n"].to_numpy() - 1] = mbit_to_bits(part["size_mbit"].to_numpy())
            if np.isnan(table).any():
                raise ValidationError(f"{path}: dataset {part['dataset'].iloc[0]} is incomplete")
            datasets.append(table)
        if not datasets:
            raise ValidationError(f"{path}: no datasets")
        return datasets

    def write_actual(self, method: str, stats: Tuple[float, float], path: PathLike) -> Path:
        mean, std = stats
        return self.write_table(pd.DataFrame([{"method": method, "mean": mean, "std": std}]), path)

    def write_solution(self, report: SolveReport, space: SampleSpace, out_dir: PathLike, eps: float, quota: int) -> Path:
        """Write the full set of solve outputs into ``out_dir``."""
        out = Path(out_dir)
        self.write_objective(report, out / "objective.csv", eps, quota)
        self.write_bounds(report, out / "bounds.csv")
        self.write_decisions(report.decisions, out / "decisions.csv")
        self.write_trajectory(report.trajectories, out / "trajectory.csv")
        self.write_distributions(report.worst_dists, space, out / "distributions.csv")
        logger.info(f"[export] {report.method} solution written to {out}")
        return out


export_service = ExportService()
