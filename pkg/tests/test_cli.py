import json


from spreadsim.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO, main
from spreadsim.graph import load_graph


def run_cli(argv):
    return main(argv)


def test_generate_and_run_from_file(tmp_path, capsys):
    gpath = tmp_path / "net.fspg"
    assert run_cli(["generate", "--gen", "er", "--nodes", "200", "--degree", "6",
                    "--seed", "3", "--out", str(gpath)]) == 0
    g = load_graph(gpath)
    assert g.num_nodes == 200
    out = tmp_path / "traj"
    code = run_cli([
        "run", "--graph", str(gpath), "--model", "seir", "--engine", "renewal",
        "--tf", "10", "--trials", "2", "--seed", "5", "--out", str(out),
        "--no-figures",
    ])
    assert code == 0
    header = (tmp_path / "traj.csv").read_text().splitlines()[0]
    assert header == "t,S,E,I,R"
    payload = json.loads((tmp_path / "traj.json").read_text())
    assert payload["graph"]["num_nodes"] == 200
    assert len(payload["runs"]) == 2
    assert "wall_clock" not in payload["runs"][0]


def test_run_outputs_byte_identical(tmp_path):
    args = ["run", "--gen", "fixed", "--nodes", "100", "--degree", "4",
            "--tf", "5", "--trials", "2", "--seed", "9", "--no-figures"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli(args + ["--out", str(a)]) == 0
    assert run_cli(args + ["--out", str(b)]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    # the output prefix is excluded from the config echo, so the whole
    # JSON payload is identical too
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_run_renders_figures(tmp_path):
    out = tmp_path / "fig"
    assert run_cli(["run", "--gen", "er", "--nodes", "120", "--degree", "6",
                    "--tf", "5", "--trials", "2", "--seed", "1",
                    "--out", str(out)]) == 0
    png = (tmp_path / "fig.png").read_bytes()
    assert png[:8] == b"\x89PNG\r\n\x1a\n"


def test_run_zero_trials_is_config_error(tmp_path, capsys):
    code = run_cli(["run", "--gen", "er", "--nodes", "50", "--trials", "0",
                    "--out", str(tmp_path / "x"), "--no-figures"])
    assert code == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "InvalidConfigError"


def test_missing_graph_file_is_io_error(tmp_path, capsys):
    code = run_cli(["run", "--graph", str(tmp_path / "nope.fspg"),
                    "--out", str(tmp_path / "x"), "--no-figures"])
    assert code == EXIT_IO


def test_infeasible_degree_sequence(tmp_path, capsys):
    code = run_cli(["generate", "--gen", "fixed", "--nodes", "99", "--degree", "7",
                    "--out", str(tmp_path / "g")])
    assert code == EXIT_INFEASIBLE


def test_invalid_moments_is_config_error(tmp_path, capsys):
    code = run_cli(["run", "--gen", "er", "--nodes", "50", "--mean-ei", "3",
                    "--median-ei", "4", "--out", str(tmp_path / "x"),
                    "--no-figures"])
    assert code == EXIT_CONFIG


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# benchmark\n"
        "gen = er\n"
        "nodes = 150\n"
        "degree = 6\n"
        "tf = 4\n"
        "trials = 2\n"
        "seed = 7\n"
        "figures = false\n"
    )
    out = tmp_path / "c"
    assert run_cli(["run", "--config", str(cfg), "--out", str(out)]) == 0
    payload = json.loads((tmp_path / "c.json").read_text())
    assert payload["config"]["nodes"] == 150
    # flag overrides file value
    out2 = tmp_path / "d"
    assert run_cli(["run", "--config", str(cfg), "--nodes", "80",
                    "--out", str(out2)]) == 0
    payload2 = json.loads((tmp_path / "d.json").read_text())
    assert payload2["config"]["nodes"] == 80


def test_config_rejects_unknown_keys(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus_key = 5\n")
    code = run_cli(["run", "--config", str(cfg), "--gen", "er",
                    "--out", str(tmp_path / "x")])
    assert code == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err.strip())
    assert "bogus_key" in err["message"]


def test_sweep_csv(tmp_path):
    out = tmp_path / "sweep"
    code = run_cli([
        "sweep", "--gen", "er", "--nodes", "150", "--degree", "6",
        "--eps", "0.1,0.05", "--tf", "6", "--trials", "2", "--seed", "2",
        "--out", str(out), "--no-figures",
    ])
    assert code == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("epsilon,peak_i")
    assert len(lines) == 3
    assert float(lines[1].split(",")[0]) == 0.05


def test_sweep_multi_topology_mode(tmp_path):
    out = tmp_path / "mt"
    code = run_cli([
        "sweep", "--topologies", "er,fixed", "--sizes", "200",
        "--eps", "0.1", "--trials", "2", "--tf", "5", "--seed", "3",
        "--exact-max-nodes", "0", "--out", str(out), "--no-figures",
    ])
    assert code == 0
    lines = (tmp_path / "mt.csv").read_text().splitlines()
    assert lines[0] == "topology,nodes,series,t,infectious_fraction"
    topos = {line.split(",")[0] for line in lines[1:]}
    assert topos == {"er", "fixed"}


def test_validate_json(tmp_path):
    out = tmp_path / "val"
    code = run_cli([
        "validate", "--gen", "er", "--nodes", "150", "--degree", "6",
        "--engine", "renewal", "--reference", "exact",
        "--tf", "8", "--trials", "3", "--seed", "4", "--out", str(out),
        "--no-figures",
    ])
    assert code == 0
    payload = json.loads((tmp_path / "val.json").read_text())
    assert set(payload) >= {"l_inf", "l2", "err_peak_i", "err_final_r", "ci"}
    assert payload["l_inf"] >= 0.0


def test_parity_report(tmp_path):
    out = tmp_path / "par"
    code = run_cli([
        "parity", "--gen", "fixed", "--nodes", "128", "--degree", "4",
        "--steps", "12", "--trials", "2", "--seed", "6", "--out", str(out),
        "--no-figures",
    ])
    assert code == 0
    payload = json.loads((tmp_path / "par.json").read_text())
    assert payload["ok"] is True
    assert payload["mismatches"] == []
    assert len(payload["variants"]) == 5


def test_bench_reports_throughput(tmp_path, capsys):
    code = run_cli([
        "bench", "--gen", "er", "--nodes", "200", "--degree", "6",
        "--tf", "3", "--trials", "1", "--seed", "8",
        "--out", str(tmp_path / "bench"), "--no-figures",
    ])
    assert code == 0
    text = capsys.readouterr().out
    assert "NUPS" in text
    payload = json.loads((tmp_path / "bench.json").read_text())
    assert payload["nups"] > 0


def test_sweep_rejects_markov_engine(tmp_path):
    code = run_cli([
        "sweep", "--gen", "er", "--nodes", "100", "--engine", "markov",
        "--out", str(tmp_path / "s"), "--no-figures",
    ])
    assert code == EXIT_CONFIG


def test_run_with_age_dependent_transmission(tmp_path):
    out = tmp_path / "age"
    code = run_cli([
        "run", "--gen", "fixed", "--nodes", "200", "--degree", "8",
        "--transmission", "age-density", "--tf", "8", "--trials", "2",
        "--seed", "11", "--out", str(out), "--no-figures",
    ])
    assert code == 0
    payload = json.loads((tmp_path / "age.json").read_text())
    assert payload["config"]["transmission"] == "age-density"
