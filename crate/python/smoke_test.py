"""End-to-end smoke test of the irvuln extension module.

    pip install --no-build-isolation crates/python
    python python/smoke_test.py
"""

import json
import pathlib
import sys
import tempfile

import irvuln

ROOT = pathlib.Path(__file__).resolve().parent.parent

IR = """
declare i8* @malloc(i64)

define i32 @helper(i32 %a) {
  ret i32 %a
}

define i32 @CWE190_demo_bad(i32 %a) {
entry:
  %x = add i32 %a, 25
  %p = call i8* @malloc(i64 16)
  %r = call i32 @helper(i32 %x)
  br label %done
done:
  ret i32 %r
}
"""


def check_normalize():
    records = irvuln.normalize_ir(IR, "CWE190__demo_01__bad.ll")
    assert [r.function_name for r in records] == ["helper", "CWE190_demo_bad"]
    bad = records[1]
    assert bad.cwe_id == 190 and bad.flaw_label == "bad"
    text = " ".join(bad.tokens)
    assert "VAR_1 = add i32 VAR_2 , 2 5 EOL" in text, text
    assert "malloc ( i64 1 6 )" in text and "FUN (" in text and "LBL_1" in text
    assert irvuln.split_numeric_literal("-0x1f") == ["-", "0", "x", "1", "f"]


def check_metrics():
    report = irvuln.classification_report([0, 0, 1, 1, 1], [0, 1, 1, 1, 0])
    assert abs(report.accuracy - 0.6) < 1e-12
    assert report.confusion == [[1, 1], [1, 2]]
    assert report.micro[0] == report.accuracy
    assert "accuracy" in report.render()
    assert round(irvuln.baseline_accuracy([5004, 2594]), 4) == 0.6586


def check_pipeline():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        irvuln.write_fixture(tmp / "ir", classes=2, per_class=300, seed=4)
        pipeline = irvuln.Pipeline(
            config=ROOT / "configs" / "fixture.toml", workspace=tmp / "ws", seed=4
        )
        assert json.loads(pipeline.config_json())["max_epochs"] > 0
        print(pipeline.run_all(tmp / "ir"))
        report = (tmp / "ws" / "report.json").read_text().splitlines()
        accuracy = json.loads(report[1])["accuracy"]
        assert accuracy >= 0.9, accuracy
        first = sorted((tmp / "ir").glob("*.ll"))[0]
        predictions = pipeline.predict([first])
        assert predictions and all(abs(sum(p[3]) - 1) < 1e-9 for p in predictions)
        assert irvuln.main(["--workspace", str(tmp / "nowhere"), "--max-epochs", "1", "train"]) == 1


if __name__ == "__main__":
    check_normalize()
    check_metrics()
    check_pipeline()
    print("smoke test passed")
    sys.exit(0)
