import json
import subprocess
import sys
from pathlib import Path
from textwrap import dedent

import numpy as np
import pytest

from torusma.cli import TABLE_COLUMNS, main
from torusma.io import read_field

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(dedent(text))
    return p


SOLVE = """\
    [experiment]
    kind = solve
    case_id = {case}
    output_dir = out

    [grid]
    n = 1
    m = 16

    [density]
    type = {dtype}
    {extra}

    [solver]
    t = 0
    """


def solve_cfg(tmp_path, case="c", dtype="constant", extra=""):
    return write(tmp_path, f"{case}.ini", SOLVE.format(case=case, dtype=dtype, extra=extra))


def test_run_solve_constant(tmp_path):
    cfg = solve_cfg(tmp_path)
    assert main(["run", str(cfg)]) == 0
    out = tmp_path / "out" / "c"
    phi = read_field(out / "phi.bin")
    assert np.all(phi.values == -1.0)
    report = json.loads((out / "report.json").read_text())
    assert set(report["checks"].values()) == {"pass"}
    header = (out / "table.csv").read_text().splitlines()[0]
    assert header == ",".join(TABLE_COLUMNS)


def test_manifest_checksums(tmp_path):
    import hashlib
    cfg = solve_cfg(tmp_path)
    main(["run", str(cfg)])
    out = tmp_path / "out" / "c"
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_code"] == 0 and man["error"] is None
    for entry in man["files"]:
        assert hashlib.sha256((out / entry["path"]).read_bytes()).hexdigest() == entry["sha256"]
    assert {"torusma", "numpy", "scipy", "python"} <= set(man["versions"])


def test_reports_are_byte_identical(tmp_path):
    cfg = solve_cfg(tmp_path, dtype="algebraic", extra="poles = 0.5 0.5 : 1")
    main(["run", str(cfg), "--output-dir", str(tmp_path / "a")])
    main(["run", str(cfg), "--output-dir", str(tmp_path / "b")])
    for name in ("report.json", "table.csv", "phi.bin"):
        assert (tmp_path / "a/c" / name).read_bytes() == (tmp_path / "b/c" / name).read_bytes()


def test_output_dir_env_and_flag(tmp_path, monkeypatch):
    cfg = solve_cfg(tmp_path)
    monkeypatch.setenv("MA_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["run", str(cfg)]) == 0
    assert (tmp_path / "env/c/report.json").exists()
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag/c/report.json").exists()


def test_parallel_jobs(tmp_path):
    cfgs = [str(solve_cfg(tmp_path, case=f"c{i}")) for i in range(3)]
    assert main(["run", "--jobs", "2", *cfgs]) == 0
    assert all((tmp_path / f"out/c{i}/report.json").exists() for i in range(3))


def test_duplicate_case_ids_rejected(tmp_path):
    a = solve_cfg(tmp_path)
    b = tmp_path / "copy.ini"
    b.write_text(a.read_text())
    assert main(["run", str(a), str(b)]) == 3


def test_non_integrable_pole_exit_code(tmp_path):
    cfg = solve_cfg(tmp_path, dtype="algebraic", extra="poles = 0.5 0.5 : 2")
    assert main(["run", str(cfg)]) == 4
    man = json.loads((tmp_path / "out/c/manifest.json").read_text())
    assert man["error"]["type"] == "IntegrabilityError"


def test_decay_hypothesis_violation_exit_code(tmp_path):
    prof = CONFIGS / "profiles" / "power_long.csv"
    cfg = write(tmp_path, "d.ini", f"""\
        [experiment]
        kind = decay_lemma
        case_id = d

        [decay]
        profile_path = {prof}
        alpha = 1
        B = 1e-3
        """)
    assert main(["run", str(cfg), "--output-dir", str(tmp_path)]) == 4
    man = json.loads((tmp_path / "d/manifest.json").read_text())
    assert man["error"]["type"] == "HViolationError"


def test_failing_check_exit_code(tmp_path):
    cfg = write(tmp_path, "mms.ini", """\
        [experiment]
        kind = mms
        case_id = strict

        [grid]
        n = 1
        m = 8

        [mms]
        grids = 16 32
        order_min = 2.5
        order_max = 3
        """)
    assert main(["run", str(cfg), "--output-dir", str(tmp_path)]) == 1
    report = json.loads((tmp_path / "strict/report.json").read_text())
    assert report["checks"]["order_in_range_t=0"] == "fail"
    assert report["checks"]["oracle_recovery_t=0"] == "pass"


def test_decay_small_start_config(tmp_path):
    assert main(["run", str(CONFIGS / "decay_small_start.ini"), "--output-dir", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "decay_small_start/report.json").read_text())
    assert report["results"]["decay"]["bound_check"] is True


def test_mms_run_orders(tmp_path):
    cfg = write(tmp_path, "mms.ini", """\
        [experiment]
        kind = mms
        case_id = mms

        [grid]
        n = 1
        m = 8

        [mms]
        grids = 16 32
        t_values = 0 1
        """)
    assert main(["run", str(cfg), "--output-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "mms/convergence.csv").read_text().splitlines()
    assert lines[0] == "t,grid_m,h,oracle_error,continuum_error,convergence_order"
    assert len(lines) == 5


def test_table_merge(tmp_path, capsys):
    main(["run", str(solve_cfg(tmp_path, case="b")), str(solve_cfg(tmp_path, case="a"))])
    capsys.readouterr()
    assert main(["table", str(tmp_path / "out/b"), str(tmp_path / "out/a/report.json")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == ",".join(TABLE_COLUMNS)
    assert [ln.split(",")[0] for ln in lines[1:]] == ["a", "b"]
    dest = tmp_path / "t.tsv"
    assert main(["table", "--format", "tsv", "-o", str(dest), str(tmp_path / "out/a")]) == 0
    assert dest.read_text().splitlines()[0] == "\t".join(TABLE_COLUMNS)


def test_table_mixed_kinds_and_empty(tmp_path):
    main(["run", str(solve_cfg(tmp_path)), str(CONFIGS / "decay_small_start.ini"),
          "--output-dir", str(tmp_path / "out")])
    assert main(["table", str(tmp_path / "out/c"), str(tmp_path / "out/decay_small_start")]) == 3
    assert main(["table"]) == 2


@pytest.mark.parametrize("body, needle", [
    ("[experiment]\nkind = solve\ncase_id = x\n\n[grid]\nn = 1\nm = 8\nbogus = 1\n", "line 8: [grid] bogus"),
    ("[experiment]\nkind = solve\ncase_id = x\n", "needs a [grid] section"),
    ("[experiment]\nkind = solve\ncase_id = x\n\n[grid]\nn = one\nm = 8\n", "line 6: [grid] n"),
    ("[experiment]\nkind = nothing\ncase_id = x\n", "unknown kind"),
    ("[experiment]\nkind = solve\ncase_id = x\n\n[grid]\nn = 1\nm = 7\n", "even integer"),
])
def test_validate_errors(tmp_path, capsys, body, needle):
    p = tmp_path / "bad.ini"
    p.write_text(body)
    assert main(["validate", str(p)]) == 3
    assert needle in capsys.readouterr().err


def test_validate_shipped_configs(capsys):
    for p in sorted(CONFIGS.glob("*.ini")):
        assert main(["validate", str(p)]) == 0, p


def test_console_script_usage():
    r = subprocess.run([sys.executable, "-m", "torusma.cli"], capture_output=True, text=True)
    assert r.returncode == 2 and "usage" in r.stderr


def test_table_three_grid_mms(tmp_path, capsys):
    runs = []
    for m in (32, 8, 16):
        cfg = write(tmp_path, f"mms{m}.ini", f"""\
            [experiment]
            kind = mms
            case_id = ladder

            [grid]
            n = 1
            m = {m}

            [mms]
            grids = {m}
            """)
        assert main(["run", str(cfg), "--output-dir", str(tmp_path / f"m{m}")]) == 0
        runs.append(str(tmp_path / f"m{m}" / "ladder"))
    capsys.readouterr()
    assert main(["table", *runs]) == 0
    rows = [ln.split(",") for ln in capsys.readouterr().out.splitlines()[1:]]
    assert [int(r[1]) for r in rows] == [8, 16, 32]
    resid = [float(r[3]) for r in rows]
    assert resid[0] > resid[1] > resid[2] > 0
