import time

import numpy as np
import pandas as pd
from django.core.management.base import BaseCommand

from tpnn.inference import component_estimate
from tpnn.serialization import build_manifest, write_manifest

from ._common import load_samples_and_rows, manifest_path_for, parse_set, translate_errors, write_table

GRID_1D = 101
GRID_2D = 21


def evaluation_rows(key: tuple[int, ...], x: np.ndarray) -> np.ndarray:
    """A regular grid over the set's coordinates for one or two variables, the data rows otherwise."""
    if len(key) > 2:
        return x
    size = GRID_1D if len(key) == 1 else GRID_2D
    axes = np.meshgrid(*([np.linspace(0.0, 1.0, size)] * len(key)), indexing="ij")
    rows = np.zeros((axes[0].size, x.shape[1]))
    for j, axis in zip(key, axes):
        rows[:, j] = axis.ravel()
    return rows


class Command(BaseCommand):
    help = "Bayes estimate and 95% pointwise credible band of one component."

    def add_arguments(self, parser):
        parser.add_argument("--samples", required=True)
        parser.add_argument("--data", required=True)
        parser.add_argument("--set", required=True, help='1-based column numbers, e.g. "1,6"')
        parser.add_argument("--out", help="component CSV; stdout when omitted")

    def handle(self, *args, **options):
        with translate_errors():
            started = time.perf_counter()
            samples, x, _ = load_samples_and_rows(options["samples"], options["data"])
            key = parse_set(options["set"], samples.p)
            rows = evaluation_rows(key, x)
            estimate = component_estimate(samples, key, rows)

            frame = pd.DataFrame()
            reference = samples.preprocessor.reference
            for j in key:
                name = samples.columns[j].name if samples.columns else f"x{j + 1}"
                frame[name] = rows[:, j]
                if reference[j] is not None:
                    frame[f"{name}_raw"] = np.quantile(reference[j], rows[:, j])
            frame["estimate"] = estimate.mean
            frame["lower_2.5"] = estimate.lo
            frame["upper_97.5"] = estimate.hi
            write_table(frame, options.get("out"), self.stdout)

            if options.get("out"):
                manifest = build_manifest(
                    "components",
                    options={k: options.get(k) for k in ("samples", "data", "set", "out")},
                    outputs={"components": options["out"]},
                    duration_seconds=time.perf_counter() - started,
                    seed=samples.meta.get("seed"),
                )
                write_manifest(manifest, manifest_path_for(options["out"]))
