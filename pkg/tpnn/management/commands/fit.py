import logging
import time
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand

from tpnn.data import load_csv
from tpnn.mcmc import run_chains
from tpnn.schemas import ChainConfig, PriorConfig, load_run_config
from tpnn.serialization import build_manifest, read_manifest, read_omega, write_manifest, write_samples, write_trace

from ._common import translate_errors, usage_error

logger = logging.getLogger(__name__)

SAMPLES_FILE = "samples.jsonl"
TRACE_FILE = "trace.csv"
MANIFEST_FILE = "manifest.json"


class Command(BaseCommand):
    help = "Run the sampler on a CSV dataset and write posterior samples, a trace and a manifest."

    def add_arguments(self, parser):
        parser.add_argument("--config", help="flat JSON of prior and chain settings")
        parser.add_argument("--data", help="training CSV with a header row")
        parser.add_argument("--out", help="output directory")
        parser.add_argument("--seed", type=int, help="overrides the config seed")
        parser.add_argument("--chains", type=int, help="overrides n_chains")
        parser.add_argument("--target", default="y", help="name of the response column")
        parser.add_argument("--family", default="gaussian", choices=["gaussian", "bernoulli", "poisson"])
        parser.add_argument("--omega", help="two-column CSV of p_input weights (column, weight)")
        parser.add_argument("--replay", help="manifest.json of an earlier fit to rerun")

    def handle(self, *args, **options):
        with translate_errors():
            run = self._resolve(options)
            self._fit(run)

    def _resolve(self, options) -> dict:
        keys = ("config", "data", "out", "seed", "chains", "target", "family", "omega")
        run = {key: options.get(key) for key in keys}
        if options.get("replay"):
            recorded = read_manifest(options["replay"]).options
            run = {key: recorded.get(key) for key in keys}
            if options.get("out"):
                run["out"] = options["out"]
        for required in ("config", "data", "out"):
            if not run.get(required):
                raise usage_error(f"--{required} is required")
        return run

    def _fit(self, run: dict) -> None:
        started = time.perf_counter()
        prior, chain = load_run_config(run["config"])
        updates = {}
        if run["seed"] is not None:
            updates["seed"] = run["seed"]
        if run["chains"] is not None:
            updates["n_chains"] = run["chains"]
        if updates:
            chain = ChainConfig(**{**chain.model_dump(), **updates})

        ds = load_csv(run["data"], run["target"], run["family"])
        if run["omega"]:
            prior = PriorConfig(**{**prior.model_dump(by_alias=True), "omega": read_omega(run["omega"], ds.p)})
        prior.omega_for(ds.p)

        out = Path(run["out"])
        out.mkdir(parents=True, exist_ok=True)
        rows = []
        samples, stats = run_chains(
            ds, prior, chain, workers=settings.TPNN_WORKERS, on_iteration=rows.append
        )
        write_samples(samples, out / SAMPLES_FILE)
        write_trace(rows, out / TRACE_FILE)

        outputs = {
            "samples": str(out / SAMPLES_FILE),
            "trace": str(out / TRACE_FILE),
            "manifest": str(out / MANIFEST_FILE),
        }
        manifest = build_manifest(
            "fit",
            options=run,
            outputs=outputs,
            duration_seconds=time.perf_counter() - started,
            config_path=run["config"],
            dataset=ds.fingerprint(),
            seed=chain.seed,
        )
        write_manifest(manifest, out / MANIFEST_FILE)
        for move, counts in stats.as_dict().items():
            logger.info("%s: %d/%d accepted", move, counts["accepted"], counts["proposed"])
        self.stdout.write(f"{len(samples)} posterior states written to {out / SAMPLES_FILE}")
