import csv
import io
import json
import math

import numpy as np
import pytest
from scipy import stats

from carma_hawkes.black_scholes import implied_vol
from carma_hawkes.calibration import PricingSettings, PsiLayout, psi_to_model
from carma_hawkes.cli import main
from carma_hawkes.fourier import FourierPricer


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_price_reference_cell(capsys):
    code, out, _ = run(capsys, "price", "--strike", "100", "--maturity", "0.25")
    assert code == 0
    call = float(out.split("\n")[0].split()[1])
    assert call == pytest.approx(14.9706, abs=0.01)


def test_price_with_mc(capsys):
    code, out, _ = run(capsys, "price", "--strike", "100", "--maturity", "0.25", "--mc", "--paths", "2000",
                       "--seed", "3")
    assert code == 0 and "MC call" in out


def test_price_with_fixed_cv_beta(capsys, tmp_path):
    cfg = write_config(tmp_path, {"numerics": {"cv_beta": 1.0, "mc_paths": 2000}})
    code, out, _ = run(capsys, "price", "--config", cfg, "--strike", "100", "--maturity", "0.25", "--mc")
    assert code == 0 and "MC call" in out


def test_usage_errors(capsys):
    assert run(capsys, "price", "--maturity", "0.25")[0] == 2
    assert run(capsys, "nonsense")[0] == 2


def test_surface_csv_and_single_cell(capsys, tmp_path):
    out_path = tmp_path / "surface.csv"
    code, _, _ = run(capsys, "surface", "--from", "90", "--to", "110", "--step", "10",
                     "--maturities", "0.25,1", "--out", str(out_path))
    assert code == 0
    table = rows(out_path.read_text())
    assert len(table) == 6 and set(table[0]) == {"strike", "maturity", "call", "put", "iv"}
    _, out, _ = run(capsys, "surface", "--from", "100", "--to", "100", "--step", "1", "--maturities", "0.25")
    cell = rows(out)[0]
    _, price_out, _ = run(capsys, "price", "--strike", "100", "--maturity", "0.25")
    assert float(cell["call"]) == pytest.approx(float(price_out.split()[1]), abs=1e-4)


def test_surface_empty_maturities(capsys):
    code, _, err = run(capsys, "surface", "--maturities", "")
    assert code == 3 and "empty maturity" in err


@pytest.mark.parametrize("preset", ["hawkes", "carma21", "carma31"])
def test_sensitivity_flat_jumps_give_diffusion_vol(capsys, preset):
    code, out, _ = run(capsys, "sensitivity", "--preset", preset, "--param", "sigma_J",
                       "--from", "0", "--to", "0.2", "--step", "0.2")
    assert code == 0
    table = rows(out)
    assert float(table[0]["iv"]) == pytest.approx(0.2, abs=1e-6)
    assert float(table[1]["iv"]) > 0.2


def test_sensitivity_mu_sweep_increases_iv(capsys):
    code, out, _ = run(capsys, "sensitivity", "--param", "mu", "--from", "0.3", "--to", "5.1", "--step", "1.2")
    assert code == 0
    iv = np.array([float(r["iv"]) for r in rows(out)])
    assert iv.size == 5 and np.all(np.diff(iv) > 0)


def test_sensitivity_errors(capsys):
    assert run(capsys, "sensitivity", "--param", "mu", "--from", "2", "--to", "1", "--step", "0.5")[0] == 3
    assert run(capsys, "sensitivity", "--param", "nope", "--from", "1", "--to", "2", "--step", "0.5")[0] == 3
    # a coefficient sweep into the non-stationary region is reported, not crashed
    assert run(capsys, "sensitivity", "--param", "b0", "--from", "1", "--to", "4", "--step", "3")[0] == 3


def test_simulate_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    ev = tmp_path / "events.csv"
    assert run(capsys, "simulate", "--maturity", "0.5", "--paths", "3000", "--seed", "9", "--out", str(a),
               "--events-out", str(ev))[0] == 0
    code, summary, _ = run(capsys, "simulate", "--maturity", "0.5", "--paths", "3000", "--seed", "9",
                           "--out", str(b))
    assert code == 0 and a.read_text() == b.read_text()
    table = rows(a.read_text())
    disc = math.exp(-0.025) * np.array([float(r["S_T"]) for r in table])
    assert abs(disc.mean() - 100.0) <= 3 * disc.std(ddof=1) / math.sqrt(disc.size)
    assert "discounted mean" in summary
    times = [float(r["time"]) for r in rows(ev.read_text())]
    assert times == sorted(times) and all(0 < t <= 0.5 for t in times)


def test_pmf_degenerate_cases(capsys, tmp_path):
    poisson = write_config(tmp_path, {"model": {"family": "hawkes", "b_raw": [0.0]}})
    code, out, _ = run(capsys, "pmf", "--config", poisson, "--maturity", "0.25", "--n-max", "20")
    assert code == 0
    probs = np.array([float(r["probability"]) for r in rows(out)])
    np.testing.assert_allclose(probs, stats.poisson.pmf(np.arange(21), 0.75), atol=1e-13)
    quiet = write_config(tmp_path, {"model": {"mu": 0.0}}, "quiet.json")
    code, out, _ = run(capsys, "pmf", "--config", quiet, "--maturity", "1", "--n-max", "5")
    assert float(rows(out)[0]["probability"]) == pytest.approx(1.0, abs=1e-14)


def test_config_round_trip_and_errors(capsys, tmp_path):
    code, first, _ = run(capsys, "config", "--preset", "carma31")
    assert code == 0
    path = write_config(tmp_path, json.loads(first))
    _, second, _ = run(capsys, "config", "--config", path)
    assert first == second
    bad = write_config(tmp_path, {"model": {"volatility": 0.2}}, "bad.json")
    code, _, err = run(capsys, "config", "--config", bad)
    assert code == 3 and "unknown model keys" in err
    custom = write_config(tmp_path, {"model": {"family": "mine", "mu": 1.0}}, "custom.json")
    assert run(capsys, "config", "--config", custom)[0] == 3
    unstable = write_config(tmp_path, {"model": {"b_raw": [5.0]}}, "unstable.json")
    assert run(capsys, "price", "--config", unstable, "--strike", "100", "--maturity", "1")[0] == 3
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert run(capsys, "config", "--config", str(broken))[0] == 3


def test_calibrate_round_trip(capsys, tmp_path):
    layout = PsiLayout(1, 0)
    settings = PricingSettings(100.0, 0.05, m=64, n_steps=200)
    truth = layout.pack(3.0, [1.0], [3.0], 0.0, 0.45, 0.2)
    pricer = FourierPricer(psi_to_model(truth, layout, settings), 64, 200)
    strikes = np.linspace(80.0, 120.0, 8)
    lines = ["strike,maturity,observable_type,observable,option_type,volume,open_interest"]
    for K, c in zip(strikes, pricer.calls(strikes, 0.5)):
        lines.append(f"{K},0.5,iv,{implied_vol(c, 100.0, K, 0.05, 0.5)!r},call,100,100")
    lines.append("95,0.5,iv,0.9,call,3,100")  # illiquid, dropped
    quotes = tmp_path / "quotes.csv"
    quotes.write_text("\n".join(lines) + "\n")
    cfg = write_config(tmp_path, {"model": {"mu": 2.5, "b_raw": [0.8], "a": [3.5]},
                                  "numerics": {"m": 64, "n_steps": 200},
                                  "calibration": {"max_evals": 400, "restarts": 1}})
    report, smile = tmp_path / "report.json", tmp_path / "smile.csv"
    code, _, _ = run(capsys, "calibrate", "--config", cfg, "--quotes", str(quotes), "--out", str(report),
                     "--smile-out", str(smile))
    assert code == 0
    res = json.loads(report.read_text())
    assert res["rrmse"] < 1e-2 and res["evaluations"] <= 400
    assert len(rows(smile.read_text())) == 8


def test_calibrate_malformed_csv(capsys, tmp_path):
    quotes = tmp_path / "quotes.csv"
    quotes.write_text("strike,maturity,observable_type,observable,option_type\n"
                      "90,0.5,iv,0.3,call\n"
                      "100,0.5,vol,0.3,call\n")
    code, _, err = run(capsys, "calibrate", "--quotes", str(quotes))
    assert code == 3 and "quotes.csv:3:" in err
    assert run(capsys, "calibrate", "--quotes", str(tmp_path / "missing.csv"))[0] == 3
