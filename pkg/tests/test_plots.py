import csv

import pytest

from init_robust.config import experiment_config_from_dict
from init_robust.errors import SchemaError
from init_robust.harness import RecordWriter, load_dataset, run_experiment, sweep
from init_robust.plots import emit_plots, read_records

from test_helpers import small_config_dict


@pytest.fixture
def records_csv(tmp_path):
    cfg = experiment_config_from_dict(small_config_dict())
    with RecordWriter(tmp_path / "run") as writer:
        run_experiment(cfg, writer=writer)
    return writer.records_path


class TestReadRecords:
    """records.csv の読み込み"""

    def test_missing_file(self, tmp_path):
        with pytest.raises(SchemaError):
            read_records(tmp_path / "nothing.csv")

    def test_missing_columns(self, tmp_path):
        path = tmp_path / "other.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        with pytest.raises(SchemaError) as exc:
            read_records(path)
        assert "clean_acc" in exc.value.missing

    def test_header_only(self, records_csv, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text(records_csv.read_text(encoding="utf-8").splitlines()[0] + "\n", encoding="utf-8")
        with pytest.raises(SchemaError):
            read_records(path)

    def test_failed_rows_skipped(self, records_csv):
        with open(records_csv, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            columns = reader.fieldnames
            rows = list(reader)
        assert len(read_records(records_csv)) == len(rows)
        # 先頭レコードを失敗扱いに書き換える
        rows[0]["failed"] = "1"
        with open(records_csv, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        assert len(read_records(records_csv)) == len(rows) - 1


class TestEmitPlots:
    """SVG チャート生成"""

    def test_epoch_charts(self, records_csv, tmp_path):
        written = emit_plots(records_csv, tmp_path / "charts")
        assert [p.name for p in written] == ["accuracy_vs_epoch.svg", "success_vs_epoch.svg"]
        svg = written[0].read_text(encoding="utf-8")
        assert "<svg" in svg
        assert "series,x,mean,min,max" in svg

    def test_budget_charts(self, tmp_path):
        config = small_config_dict(train={"epochs": 2, "eval_every": 0}, attack={"feature_budgets": [0.1, 0.5]})
        cfg = experiment_config_from_dict(config)
        with RecordWriter(tmp_path / "run") as writer:
            sweep(cfg, "sigma", [0.5, 1.0], load_dataset(cfg.dataset), writer=writer)
        names = sorted(p.name for p in emit_plots(writer.records_path, tmp_path / "charts"))
        assert names == ["success_vs_budget_feature_pgd.svg", "success_vs_budget_random_flip.svg"]

    def test_clean_only(self, tmp_path):
        cfg = experiment_config_from_dict(small_config_dict(train={"epochs": 2, "eval_every": 0}, attack={"kinds": []}))
        with RecordWriter(tmp_path / "run") as writer:
            run_experiment(cfg, writer=writer)
        assert [p.name for p in emit_plots(writer.records_path, tmp_path)] == ["clean_accuracy.svg"]

    def test_stable_output(self, records_csv, tmp_path):
        first = emit_plots(records_csv, tmp_path / "a")
        second = emit_plots(records_csv, tmp_path / "b")
        for a, b in zip(first, second):
            assert a.read_bytes() == b.read_bytes()
