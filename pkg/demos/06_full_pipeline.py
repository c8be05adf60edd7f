"""End-to-end pipeline through the command-line interface, at a reduced
scale: generate data, train both losses, sample under both schemes, sweep
the number of shared steps, and render the SVG report charts.

Writes everything under demos/output/pipeline; rerunning reproduces the
same bytes.
"""

from pathlib import Path

from sagediff.cli import main

OUT = Path(__file__).parent / "output" / "pipeline"
SMALL = ["n_meta=40", "children_per_meta=3", "records_per_concept=4",
         "target_groups=600", "train_steps=1500", "hidden_width=32",
         "sample_metas=20", "omega=1.0", "checkpoint_every=0"]


def run(*argv):
    code = main(list(argv))
    assert code == 0, f"command failed ({code}): {argv}"


def flags(out_dir, *extra):
    out = []
    for kv in [*SMALL, f"out_dir={out_dir}"]:
        out += ["--set", kv]
    return out + list(extra)


print("== make-data")
run("make-data", *flags(OUT))

for loss in ("ldm", "sage"):
    print(f"== train {loss}")
    run("train", *flags(OUT, "--set", f"loss={loss}",
                        "--checkpoint", str(OUT / f"ckpt_{loss}.json")))

print("== sample + eval: independent baseline and a shared-step sweep")
for loss in ("ldm", "sage"):
    ckpt = str(OUT / f"ckpt_{loss}.json")
    run("sample", *flags(OUT, "--set", f"loss={loss}"), "--mode", "independent",
        "--checkpoint", ckpt,
        "--samples", str(OUT / f"samples_{loss}_ind.jsonl"),
        "--cost", str(OUT / f"cost_{loss}_ind.csv"))
    # the loss override shifts the config hash away from the dataset's, so
    # the lineage gate needs an explicit --force
    run("eval", *flags(OUT, "--set", f"loss={loss}"),
        "--samples", str(OUT / f"samples_{loss}_ind.jsonl"),
        "--cost", str(OUT / f"cost_{loss}_ind.csv"),
        "--model", loss, "--scheme", "independent", "--force")
    for shared in (0, 3, 6, 9, 12, 15):
        beta = shared / 30.0
        tag = f"{loss}_b{shared}"
        # changing beta at sampling time shifts the config hash, hence --force
        run("sample", *flags(OUT, "--set", f"loss={loss}", "--set", f"beta={beta}"),
            "--mode", "shared", "--checkpoint", ckpt, "--force",
            "--samples", str(OUT / f"samples_{tag}.jsonl"),
            "--cost", str(OUT / f"cost_{tag}.csv"),
            *( ["--dump-traces"] if shared == 9 else [] ))
        run("eval", *flags(OUT, "--set", f"loss={loss}", "--set", f"beta={beta}"),
            "--samples", str(OUT / f"samples_{tag}.jsonl"),
            "--cost", str(OUT / f"cost_{tag}.csv"),
            "--model", loss, "--scheme", "shared", "--force")

print("== plot")
run("plot", *flags(OUT), "--samples", str(OUT / "samples_sage_b9.jsonl"))
print(f"report and charts under {OUT}")
