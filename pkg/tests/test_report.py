import json
import tempfile
import unittest
from datetime import datetime

try:
    from datetime import UTC
except ImportError:  # Python < 3.11
    from datetime import timezone

    UTC = timezone.utc
from pathlib import Path

import numpy as np

from varjet.errors import ReportWriteError
from varjet.report import build_report, emit_report, input_digest, render_report, to_plain

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


class ReportTests(unittest.TestCase):
    def test_to_plain(self) -> None:
        plain = to_plain({"x": np.array([1.0, np.inf]), "ok": np.bool_(True), "n": np.int64(3), "pair": (1, 2.5)})
        self.assertEqual(plain, {"x": [1.0, None], "ok": True, "n": 3, "pair": [1, 2.5]})

    def test_digest_depends_on_inputs(self) -> None:
        one = input_digest([FIXTURES / "linear1.sys.json"])
        self.assertEqual(one, input_digest([FIXTURES / "linear1.sys.json"]))
        self.assertNotEqual(one, input_digest([FIXTURES / "linear2.sys.json"]))
        with self.assertRaises(ReportWriteError):
            input_digest([FIXTURES / "absent.json"])

    def test_rendering_is_stable(self) -> None:
        now = datetime(2026, 1, 2, 3, 4, 5, tzinfo=UTC)
        document = build_report("flow", {"phi": np.array([0.5])}, seed=4, tolerances={"flow": 1e-6}, now=now)
        first = render_report(document)
        self.assertEqual(first, render_report(build_report("flow", {"phi": [0.5]}, seed=4, tolerances={"flow": 1e-6}, now=now)))
        loaded = json.loads(first)
        self.assertEqual(loaded["format"], "varjet-report/1")
        self.assertEqual(loaded["generatedAt"], "2026-01-02T03:04:05+00:00")
        self.assertEqual(loaded["results"]["phi"], [0.5])

    def test_emit_report_with_csv(self) -> None:
        document = build_report("verify-eq8", {})
        with tempfile.TemporaryDirectory() as tmp:
            target = emit_report(document, Path(tmp) / "nested" / "r.json", [(0.0, 1e-17, 2.0)], Path(tmp) / "r.csv")
            self.assertTrue(target.exists())
            rows = (Path(tmp) / "r.csv").read_text(encoding="utf-8").splitlines()
            self.assertEqual(rows[0], "t,residual,scale")
            self.assertEqual(rows[1], "0,9.9999999999999998e-18,2")

    def test_emit_report_failure(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            blocker = Path(tmp) / "file"
            blocker.write_text("x", encoding="utf-8")
            with self.assertRaises(ReportWriteError) as ctx:
                emit_report(build_report("flow", {}), blocker / "r.json")
            self.assertEqual(ctx.exception.exit_code, 7)


if __name__ == "__main__":
    unittest.main()
