#!/usr/bin/env python3
"""Regenerate the golden fixtures the binding parity tests compare against.

Everything here goes through the sr3d CLI (the same surface the bindings
delegate to), so fixtures are primary outputs byte for byte. Run from the
bindings directory:

    python3 scripts/make_fixtures.py
"""

import json
import shutil
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

SR3D = shutil.which("sr3d") or "sr3d"

CONFIG = {"frame_count": 4, "token_dim": 12, "sinusoid": {"channels_per_axis": 8}}
QUOTAS = {"tall_short": 3, "big_small": 2, "multi_complex": 2, "width": 3, "distance": 2, "height": 2}
METRIC_CASES = [
    (1.0, 1.0, 1.25),
    (1.2, 1.0, 1.25),
    (2.0, 1.0, 1.25),
    (1.25, 1.0, 1.25),
    (1.2500001, 1.0, 1.25),
    (0.5, 1.0, 1.25),
    (3.3, 3.0, 1.25),
    (0.8, 1.0, 1.1),
    (4.0, 2.0, 2.0),
    (1.5, 2.0, 1.25),
]


def run(*args: str) -> str:
    result = subprocess.run([SR3D, *args], capture_output=True, text=True)
    if result.returncode != 0:
        sys.exit(f"sr3d {' '.join(args)} failed:\n{result.stderr}")
    return result.stdout


def main() -> None:
    if FIXTURES.exists():
        shutil.rmtree(FIXTURES)
    FIXTURES.mkdir(parents=True)

    cfg_path = FIXTURES / "cfg.json"
    cfg_path.write_text(json.dumps(CONFIG, indent=2) + "\n")

    # deterministic scene shared by every fixture
    scene_dir = FIXTURES / "scene"
    run("synth", str(scene_dir), "--seed", "7", "--frames", "4", "--boxes", "7")
    manifest = scene_dir / "manifest.json"

    # loadScene golden
    (FIXTURES / "info.json").write_text(run("info", str(manifest), "--json"))

    # buildSceneRepresentation golden (canonical maps, grids, transform)
    canon_dir = FIXTURES / "canon"
    stdout = run("canonicalize", str(manifest), "--config", str(cfg_path), "--out", str(canon_dir), "--threads", "1")
    (FIXTURES / "canonicalize_stdout.json").write_text(stdout)

    # extractMultiView goldens: one prompt per kind
    prompts_dir = FIXTURES / "prompts"
    features_dir = FIXTURES / "features"
    prompts_dir.mkdir()
    features_dir.mkdir()
    scene_doc = json.loads(manifest.read_text())

    box_prompt = prompts_dir / "prompt_box3d.json"
    box_prompt.write_text(json.dumps({"kind": "box3d", "id": 1, "box": scene_doc["boxes"][0]}, indent=2))

    rect_prompt = prompts_dir / "prompt_box2d.json"
    rect_prompt.write_text(
        json.dumps({"kind": "box2d", "id": 2, "rects": {"1": [20, 12, 70, 55]}}, indent=2)
    )

    # a mask2d prompt whose mask is box 1 projected into frame 0, written
    # by re-using the box2d machinery: full-frame rectangle on frame 0
    mask_prompt = prompts_dir / "prompt_mask2d.json"
    mask_prompt.write_text(
        json.dumps({"kind": "box2d", "id": 3, "rects": {"0": [30, 20, 60, 50]}}, indent=2)
    )

    for name, prompt in (("box3d", box_prompt), ("box2d", rect_prompt), ("mask2d", mask_prompt)):
        out = run("region", str(manifest), "--prompt", str(prompt), "--config", str(cfg_path), "--threads", "1")
        (features_dir / f"feature_{name}.json").write_text(out)

    # embedGrid / fuseGrids goldens on real canonicalize outputs
    embed_dir = FIXTURES / "embed"
    embed_dir.mkdir()
    stdout = run(
        "embed",
        "--pointmap", str(canon_dir / "canonical_00000.p3dr"),
        "--validity", str(canon_dir / "validity_00000.p3dr"),
        "--out", str(embed_dir / "position.p3dr"),
        "--config", str(cfg_path),
    )
    (embed_dir / "embed_position_stdout.json").write_text(stdout)
    stdout = run(
        "embed",
        "--pointmap", str(canon_dir / "canonical_00000.p3dr"),
        "--validity", str(canon_dir / "validity_00000.p3dr"),
        "--vision", str(canon_dir / "posgrid_00000.p3dr"),
        "--out", str(embed_dir / "fused.p3dr"),
        "--config", str(cfg_path),
    )
    (embed_dir / "embed_fused_stdout.json").write_text(stdout)

    # generate + evaluate goldens
    qa_dir = FIXTURES / "qa"
    qa_dir.mkdir()
    (qa_dir / "quotas.json").write_text(json.dumps(QUOTAS, indent=2) + "\n")
    run("genqa", str(manifest), "--quotas", str(qa_dir / "quotas.json"), "--seed", "13", "--out", str(qa_dir / "qa.jsonl"))
    with (qa_dir / "pred.jsonl").open("w") as f:
        for line in (qa_dir / "qa.jsonl").read_text().splitlines():
            item = json.loads(line)
            if item["answer_kind"] == "choice":
                pred = f"region {item['gt_choice']}" if isinstance(item["gt_choice"], int) else item["gt_choice"]
            else:
                pred = f"{item['gt_value']} m"
            f.write(json.dumps({"id": item["id"], "prediction": pred}) + "\n")
    (qa_dir / "report.json").write_text(
        run("eval", "--qa", str(qa_dir / "qa.jsonl"), "--pred", str(qa_dir / "pred.jsonl"), "--json")
    )

    # metric goldens
    cases = []
    for pred, gt, delta in METRIC_CASES:
        out = json.loads(run("metrics", "--pred", str(pred), "--gt", str(gt), "--delta", str(delta)))
        cases.append({"pred": pred, "gt": gt, "delta": delta, **out})
    (FIXTURES / "metrics_cases.json").write_text(json.dumps(cases, indent=2) + "\n")

    n_files = sum(1 for p in FIXTURES.rglob("*") if p.is_file())
    print(f"wrote {n_files} fixture files under {FIXTURES}")


if __name__ == "__main__":
    main()
