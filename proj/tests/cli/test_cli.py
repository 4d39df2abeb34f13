"""Command-line driver checks. Usage: test_cli.py PVTRACK_BINARY DATA_DIR"""

import csv
import filecmp
import json
import pathlib
import subprocess
import sys
import tempfile
import unittest

BINARY = None
DATA = None


def pvtrack(*args):
    return subprocess.run([BINARY, *map(str, args)], capture_output=True, text=True)


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


class CliTest(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = pathlib.Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_bundled_config_runs(self):
        out = self.tmp / "sunny"
        r = pvtrack("run", "--config", DATA / "configs" / "sunny_day.json", "--set", "sim.duration=120", "--out", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        for name in ("trace.csv", "controller.csv", "estimator.csv", "metrics.csv", "config.json"):
            self.assertTrue((out / name).is_file(), name)
        rows = read_rows(out / "metrics.csv")
        self.assertEqual(rows[0]["scenario"], "sunny_day")
        echoed = json.loads((out / "config.json").read_text())
        self.assertEqual(echoed["sim"]["duration"], 120)

    def test_missing_config_is_a_configuration_error(self):
        r = pvtrack("run", "--config", self.tmp / "absent.json", "--out", self.tmp / "x")
        self.assertEqual(r.returncode, 2)
        self.assertIn("absent.json", r.stderr)

    def test_unknown_override_key(self):
        r = pvtrack("run", "--config", DATA / "configs" / "setpoint_steps.json", "--set", "fppt.k_bogus=1",
                    "--out", self.tmp / "x")
        self.assertEqual(r.returncode, 2)

    def test_seed_override_is_reproducible(self):
        outs = []
        for name in ("a", "b"):
            out = self.tmp / name
            r = pvtrack("run", "--config", DATA / "configs" / "setpoint_steps.json", "--seed", 7, "--out", out)
            self.assertEqual(r.returncode, 0, r.stderr)
            outs.append(out)
        for name in ("trace.csv", "controller.csv", "estimator.csv", "metrics.csv", "config.json"):
            self.assertTrue(filecmp.cmp(outs[0] / name, outs[1] / name, shallow=False), name)
        other = self.tmp / "c"
        pvtrack("run", "--config", DATA / "configs" / "setpoint_steps.json", "--seed", 8, "--out", other)
        self.assertFalse(filecmp.cmp(outs[0] / "trace.csv", other / "trace.csv", shallow=False))

    def test_validate_reports_ok(self):
        for cfg in sorted((DATA / "configs").glob("*.json")):
            r = pvtrack("validate", "--config", cfg)
            self.assertEqual(r.returncode, 0, cfg.name + r.stdout + r.stderr)
            self.assertTrue(r.stdout.startswith("OK"), r.stdout)

    def test_validate_names_rate_violation(self):
        r = pvtrack("validate", "--config", DATA / "configs" / "setpoint_steps.json", "--set", "sim.ts=0.07")
        self.assertEqual(r.returncode, 2)
        self.assertIn("integer multiple of Ts", r.stdout + r.stderr)

    def test_validate_names_short_profile(self):
        cfg = self.tmp / "short.json"
        cfg.write_text(json.dumps({"sim": {
            "duration": 100.0,
            "irradiance": {"type": "series", "points": [[0, 500], [40, 600]]},
        }}))
        r = pvtrack("validate", "--config", cfg)
        self.assertEqual(r.returncode, 2)
        text = r.stdout + r.stderr
        self.assertIn("irradiance profile covers", text)
        self.assertIn("40", text)

    def test_curves_default_grid(self):
        out = self.tmp / "curves"
        r = pvtrack("curves", "--out", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        mpp = read_rows(out / "mpp.csv")
        levels = [float(m["g"]) for m in mpp]
        self.assertEqual(len(levels), 25)
        self.assertAlmostEqual(levels[0], 0.04, places=12)
        self.assertAlmostEqual(levels[-1], 1.0, places=12)

        curves = {}
        for row in read_rows(out / "curves.csv"):
            curves.setdefault(float(row["g"]), []).append({k: float(v) for k, v in row.items()})
        self.assertEqual(len(curves), 25)

        # Each curve's sampled peak sits on the closed-form MPP.
        for m in mpp:
            pts = curves[float(m["g"])]
            peak = max(p["p"] for p in pts)
            self.assertLessEqual(abs(peak - float(m["pmp"])) / float(m["pmp"]), 1e-3, m["g"])

        # Below the smallest Vmp the current ratio barely depends on irradiance.
        # Each level has its own voltage grid, so compare interpolated values.
        def kph_at(pts, v):
            for lo, hi in zip(pts, pts[1:]):
                if lo["v"] <= v <= hi["v"]:
                    w = (v - lo["v"]) / (hi["v"] - lo["v"])
                    return lo["kph"] + w * (hi["kph"] - lo["kph"])
            raise ValueError(v)

        v_cut = 0.9 * min(float(m["vmp"]) for m in mpp)
        spread = 0.0
        for k in range(101):
            v = v_cut * k / 100
            ratios = [kph_at(curves[g], v) for g in levels]
            spread = max(spread, (max(ratios) - min(ratios)) / max(ratios))
        self.assertLess(spread, 0.02)


if __name__ == "__main__":
    BINARY = sys.argv[1]
    DATA = pathlib.Path(sys.argv[2])
    unittest.main(argv=[sys.argv[0]], verbosity=2)
