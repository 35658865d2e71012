import json
from pathlib import Path

import pytest

import trajsim as ts
from trajsim import demos
from trajsim.cli import main


def demo(name: str) -> str:
    return str(demos.demo_path(name))


def write(tmp_path: Path, name: str, text: str) -> str:
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_validate_ok(capsys):
    code = main(["validate", demo("rychain4.circ"), demo("rychain_mixture.noise")])
    out = capsys.readouterr().out
    assert code == 0
    assert "depolarizing(0.15)" in out and "unitary mixture" in out
    assert "noise sites: 4" in out


def test_validate_invalid_channel(tmp_path, capsys):
    noise = write(
        tmp_path, "bad.noise",
        "channel name=bad arity=1\nkraus 0.5+0i 0+0i 0+0i 0.5+0i\nend\n"
        "rule gate=* qubit=* channel=bad\n",
    )
    code = main(["validate", demo("rychain4.circ"), noise])
    out = capsys.readouterr().out
    assert code == 3
    assert "INVALID" in out and "7.5" in out  # deviation 0.75


def test_validate_missing_file(capsys):
    code = main(["validate", "/does/not/exist.circ", demo("rychain_mixture.noise")])
    assert code == 5


def test_parse_error_exit_code(tmp_path, capsys):
    circ = write(tmp_path, "broken.circ", "qubits 2\ngate x 5\n")
    code = main(["validate", circ, demo("rychain_mixture.noise")])
    assert code == 2
    assert "line 2" in capsys.readouterr().err


def test_run_probabilistic_counts_contract(tmp_path, capsys):
    out_dir = tmp_path / "ds"
    code = main([
        "run", "--circuit", demo("rychain4.circ"), "--noise", demo("rychain_mixture.noise"),
        "--strategy", "probabilistic", "--seed", "7", "--nsamples", "100",
        "--nshots", "1000", "--out", str(out_dir),
    ])
    assert code == 0
    dataset = ts.Dataset.read(out_dir)
    dataset.validate()
    rows = dataset.manifest["trajectories"]
    assert 1 <= len(rows) <= 100
    assert all(row["shots"] == 1000 for row in rows)
    assert dataset.manifest["strategy"] == "probabilistic"


def test_run_cutoff_demo_three_trajectories(tmp_path):
    circ = write(tmp_path, "two.circ", "qubits 2\ngate x 0\ngate x 1\n")
    noise = write(tmp_path, "two.noise", "rule gate=x qubit=* channel=bit_flip(0.1)\n")
    out_dir = tmp_path / "ds"
    code = main([
        "run", "--circuit", circ, "--noise", noise, "--strategy", "cutoff",
        "--cutoff", "0.05", "--nshots", "10", "--seed", "1", "--out", str(out_dir),
    ])
    assert code == 0
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["n_trajectories"] == 3


def test_run_deterministic_across_invocations_and_parallelism(tmp_path):
    args = [
        "run", "--circuit", demo("rychain4.circ"), "--noise", demo("rychain_mixture.noise"),
        "--strategy", "proportional", "--seed", "33", "--nsamples", "400",
        "--total-shots", "5000",
    ]
    outs = []
    for name, par in (("a", "1"), ("b", "1"), ("c", "4")):
        out_dir = tmp_path / name
        assert main(args + ["--out", str(out_dir), "--parallelism", par]) == 0
        outs.append(out_dir)
    records = [(p / "records.jsonl").read_bytes() for p in outs]
    assert records[0] == records[1] == records[2]
    manifests = [ts.manifest_core(json.loads((p / "manifest.json").read_text())) for p in outs]
    assert manifests[0] == manifests[1] == manifests[2]


def test_run_requires_seed(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main([
            "run", "--circuit", demo("rychain4.circ"), "--strategy", "probabilistic",
        ])
    assert excinfo.value.code == 2


def test_oracle_pass_and_hash_mismatch(tmp_path, capsys):
    out_dir = tmp_path / "ds"
    assert main([
        "run", "--circuit", demo("rychain4.circ"), "--noise", demo("rychain_mixture.noise"),
        "--strategy", "proportional", "--seed", "2", "--nsamples", "2000",
        "--total-shots", "50000", "--out", str(out_dir),
    ]) == 0
    code = main([
        "oracle", "--circuit", demo("rychain4.circ"), "--noise", demo("rychain_mixture.noise"),
        "--dataset", str(out_dir), "--threshold", "0.05",
    ])
    assert code == 0
    assert "tv distance" in capsys.readouterr().out

    code = main([
        "oracle", "--circuit", demo("ghz4.circ"), "--noise", demo("rychain_mixture.noise"),
        "--dataset", str(out_dir),
    ])
    assert code == 3
    assert "hash mismatch" in capsys.readouterr().err


def test_oracle_reweights_uniform_shot_strategies(tmp_path, capsys):
    out_dir = tmp_path / "ds"
    assert main([
        "run", "--circuit", demo("rychain4.circ"), "--noise", demo("rychain_mixture.noise"),
        "--strategy", "cutoff", "--cutoff", "0.0005", "--nshots", "4000",
        "--seed", "4", "--out", str(out_dir),
    ]) == 0
    code = main([
        "oracle", "--circuit", demo("rychain4.circ"), "--noise", demo("rychain_mixture.noise"),
        "--dataset", str(out_dir), "--threshold", "0.05",
    ])
    assert code == 0


def test_run_band_strategy(tmp_path):
    out_dir = tmp_path / "ds"
    code = main([
        "run", "--circuit", demo("rychain4.circ"), "--noise", demo("rychain_mixture.noise"),
        "--strategy", "band", "--p-min", "0.3", "--p-max", "1.0", "--seed", "3",
        "--nsamples", "500", "--nshots", "100", "--out", str(out_dir),
    ])
    assert code == 0
    manifest = json.loads((out_dir / "manifest.json").read_text())
    # only the no-error set has joint probability >= 0.3 on this demo
    assert manifest["n_trajectories"] == 1
    assert manifest["trajectories"][0]["selections"] == []


def test_run_site_filter_flags(tmp_path):
    out_dir = tmp_path / "ds"
    code = main([
        "run", "--circuit", demo("rychain4.circ"), "--noise", demo("rychain_mixture.noise"),
        "--strategy", "probabilistic", "--seed", "3", "--nsamples", "2000",
        "--nshots", "10", "--filter-gate", "x", "--out", str(out_dir),
    ])
    assert code == 0
    manifest = json.loads((out_dir / "manifest.json").read_text())
    x_site = 3
    for row in manifest["trajectories"]:
        assert all(site == x_site for site, _k in row["selections"])


def test_oracle_noiseless_dataset(tmp_path, capsys):
    out_dir = tmp_path / "ds"
    assert main([
        "run", "--circuit", demo("ghz4.circ"), "--strategy", "probabilistic",
        "--seed", "8", "--nsamples", "10", "--nshots", "100000", "--out", str(out_dir),
    ]) == 0
    capsys.readouterr()
    code = main([
        "oracle", "--circuit", demo("ghz4.circ"), "--dataset", str(out_dir),
        "--threshold", "0.01",
    ])
    assert code == 0
    tv = float(capsys.readouterr().out.split()[2])
    assert tv <= 0.01  # sampling noise only, 1e5 shots


def test_bench_csv_shapes(tmp_path):
    out_dir = tmp_path / "bench"
    code = main([
        "bench", "--circuit", demo("rychain4.circ"), "--noise", demo("rychain_mixture.noise"),
        "--seed", "5", "--out", str(out_dir), "--batch-sizes", "1,10,100,1000,10000",
    ])
    assert code == 0
    throughput = (out_dir / "throughput.csv").read_text().splitlines()
    assert throughput[0] == "m,mode,shots_per_second,unique_fraction"
    assert len(throughput) == 11  # 2 modes x 5 sizes
    uniqueness = (out_dir / "uniqueness.csv").read_text().splitlines()
    assert uniqueness[0] == "m,unique_fraction"
    assert len(uniqueness) == 6
    first = uniqueness[1].split(",")
    assert first[0] == "1" and float(first[1]) == 1.0
