import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from pydantic import ValidationError

from tpnn.exceptions import ConfigError
from tpnn.schemas import (
    BenchSpec,
    ChainConfig,
    PriorConfig,
    load_bench_spec,
    load_json_document,
    load_run_config,
    split_run_config,
)


class PriorConfigTests(SimpleTestCase):
    def test_defaults(self):
        cfg = PriorConfig()
        self.assertEqual((cfg.K_max, cfg.C0, cfg.M), (100, 0.01, 5.0))
        self.assertEqual(cfg.effective_q_lambda(), 0.9)
        self.assertFalse(cfg.lambda_resolved)

    def test_move_probabilities_must_sum_to_one(self):
        with self.assertRaisesMessage(ValidationError, "must equal 1"):
            PriorConfig(q_add=0.5, q_delete=0.5, q_change=0.5)

    def test_lambda_and_quantile_are_exclusive(self):
        with self.assertRaises(ValidationError):
            PriorConfig(q_lambda=0.5, **{"lambda": 1.0})

    def test_unknown_fields_are_rejected(self):
        with self.assertRaises(ValidationError):
            PriorConfig(K_maximum=3)

    def test_omega(self):
        np.testing.assert_allclose(PriorConfig().omega_for(4), [0.25] * 4)
        np.testing.assert_allclose(PriorConfig(omega=[1, 3]).omega_for(2), [0.25, 0.75])
        with self.assertRaises(ConfigError):
            PriorConfig(omega=[1, 3]).omega_for(3)
        with self.assertRaises(ValidationError):
            PriorConfig(omega=[1, 0])

    def test_dump_uses_lambda_alias(self):
        self.assertIn("lambda", PriorConfig(**{"lambda": 0.3}).model_dump(by_alias=True))


class RunConfigTests(SimpleTestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.tmp = Path(self._tmp.name)

    def test_split(self):
        prior, chain = split_run_config({"K_max": 5, "lambda": 0.2, "burn_in": 10, "seed": 4})
        self.assertEqual((prior.K_max, prior.lam), (5, 0.2))
        self.assertEqual((chain.burn_in, chain.seed, chain.thin), (10, 4, 1))

    def test_unknown_key(self):
        with self.assertRaisesMessage(ConfigError, "unknown config keys: bogus"):
            split_run_config({"bogus": 1})

    def test_validation_messages_name_the_field(self):
        with self.assertRaisesMessage(ConfigError, "thin"):
            split_run_config({"thin": 0})

    def test_load_from_file(self):
        path = self.tmp / "run.json"
        path.write_text(json.dumps({"iterations": 7, "marginal_kind": "uniform"}))
        _, chain = load_run_config(path)
        self.assertEqual(chain, ChainConfig(iterations=7, marginal_kind="uniform"))

    def test_document_errors(self):
        with self.assertRaisesMessage(ConfigError, "not found"):
            load_json_document(self.tmp / "absent.json")
        broken = self.tmp / "broken.json"
        broken.write_text('{"K_max": 3,\n}')
        with self.assertRaisesMessage(ConfigError, "line 2"):
            load_json_document(broken)
        listing = self.tmp / "list.json"
        listing.write_text("[1, 2]")
        with self.assertRaises(ConfigError):
            load_json_document(listing)

    def test_bench_spec(self):
        path = self.tmp / "bench.json"
        path.write_text(json.dumps({"data": {"function_id": "f1", "n": 100}}))
        spec = load_bench_spec(path)
        self.assertIsInstance(spec, BenchSpec)
        self.assertEqual((spec.data.p, spec.test_fraction, spec.max_order), (10, 0.2, 3))

        path.write_text(json.dumps({"data": {"function_id": "f9", "n": 100}}))
        with self.assertRaisesMessage(ConfigError, "data.function_id"):
            load_bench_spec(path)
