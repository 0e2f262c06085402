import csv
import io
import json

import numpy as np
import pytest

from sobolmc.core import IndexSet
from sobolmc.experiments import (
    COMPARED_KINDS,
    CSV_HEADER,
    EfficiencyTable,
    ExperimentConfig,
    config_from_json,
    csv_text,
    efficiency,
    g_function_study,
    product6_ratio_note,
    product6_study,
    run_efficiency_experiment,
    write_csv,
)
from sobolmc.models import analytic_anova, builtin_model


def u_of(ix, dim):
    return IndexSet.from_indices(ix, dim)


class TestEfficiency:
    def test_cost_factors(self):
        assert efficiency(1.0, 1.0, 3, 4) == 0.75
        assert efficiency(1.0, 1.0, 3, 2) == 1.5
        assert efficiency(1.0, 0.5, 3, 3) == 2.0

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            efficiency(0.0, 1.0, 3, 3)
        with pytest.raises(ValueError):
            efficiency(1.0, -1.0, 3, 3)
        with pytest.raises(ValueError):
            efficiency(1.0, 1.0, 0, 3)


class TestConfigValidation:
    def base(self, **kw):
        args = dict(
            model=builtin_model("g"),
            us=(u_of([1], 3),),
            n=100,
            replicates=2,
            seed=0,
        )
        args.update(kw)
        return ExperimentConfig(**args)

    def test_bounds(self):
        with pytest.raises(ValueError):
            self.base(n=1)
        with pytest.raises(ValueError):
            self.base(replicates=0)

    def test_kind_gating(self):
        with pytest.raises(ValueError, match="include_original"):
            self.base(kinds=COMPARED_KINDS + ("original",))
        self.base(kinds=COMPARED_KINDS + ("original",), include_original=True)
        with pytest.raises(ValueError, match="baseline"):
            self.base(kinds=("correlation2",))

    def test_replicate_ids(self):
        cfg = self.base()
        assert cfg.replicate_ids == (0, 1)
        with pytest.raises(ValueError):
            self.base(replicate_ids=(0,))


@pytest.fixture(scope="module")
def small_g():
    return g_function_study(n=20_000, replicates=3, seed=11)


class TestStudies:
    def test_row_layout(self, small_g):
        assert [str(r.u) for r in small_g.rows] == [
            "{1}", "{2}", "{3}", "{1,2}", "{1,3}", "{2,3}"
        ]
        for row in small_g.rows:
            assert row.eff_corr1 == 1.0
            assert row.eff_corr2 > 0 and row.eff_orcl1 > 0 and row.eff_orcl2 > 0
            assert row.se_eff_corr2 is not None and row.se_eff_corr2 >= 0

    def test_rel_index_is_analytic(self, small_g):
        rep = analytic_anova(builtin_model("g"))
        for row in small_g.rows:
            assert row.rel_index == pytest.approx(
                rep.lower_u[row.u] / rep.sigma2, rel=1e-12
            )

    def test_product6_notes_on_pair_rows(self):
        table = product6_study(n=5_000, replicates=2, seed=1)
        assert len(table.rows) == 9
        for row in table.rows:
            if len(row.u) == 2:
                assert "disagrees" in row.note
            else:
                assert row.note == ""
        assert product6_ratio_note(u_of([1, 2], 6)) != ""
        assert product6_ratio_note(u_of([1], 6)) == ""

    def test_replicate_permutation_only_reassociates(self):
        base = ExperimentConfig(
            model=builtin_model("g"), us=(u_of([1], 3), u_of([2, 3], 3)),
            n=10_000, replicates=3, seed=5,
        )
        permuted = ExperimentConfig(
            model=builtin_model("g"), us=(u_of([1], 3), u_of([2, 3], 3)),
            n=10_000, replicates=3, seed=5, replicate_ids=(2, 0, 1),
        )
        a = run_efficiency_experiment(base)
        b = run_efficiency_experiment(permuted)
        for ra, rb in zip(a.rows, b.rows):
            assert ra.var_corr1 == pytest.approx(rb.var_corr1, rel=1e-9)
            assert ra.eff_corr2 == pytest.approx(rb.eff_corr2, rel=1e-9)
            assert ra.eff_orcl2 == pytest.approx(rb.eff_orcl2, rel=1e-9)

    def test_thread_workers_change_nothing(self):
        serial = g_function_study(n=8_000, replicates=3, seed=2, workers=1)
        threaded = g_function_study(n=8_000, replicates=3, seed=2, workers=3)
        for ra, rb in zip(serial.rows, threaded.rows):
            assert ra.var_corr1 == rb.var_corr1
            assert ra.eff_corr2 == rb.eff_corr2
            assert ra.se_eff_orcl1 == rb.se_eff_orcl1

    def test_include_original(self):
        table = g_function_study(n=5_000, replicates=2, seed=3, include_original=True)
        for row in table.rows:
            assert row.original_estimate is not None

    def test_oracle_center_changes_oracle_columns_only(self):
        exact = g_function_study(n=8_000, replicates=2, seed=4)
        imperfect = g_function_study(n=8_000, replicates=2, seed=4, center=26.8)
        for ra, rb in zip(exact.rows, imperfect.rows):
            assert ra.var_corr1 == rb.var_corr1
            assert ra.var_corr2 == rb.var_corr2
            assert ra.var_orcl1 != rb.var_orcl1
            assert ra.var_orcl2 != rb.var_orcl2


class TestCsv:
    def test_header_and_rows(self, tmp_path):
        table = g_function_study(n=5_000, replicates=2, seed=1)
        path = tmp_path / "table.csv"
        write_csv(table, path)
        text = path.read_text()
        lines = text.strip().split("\n")
        assert lines[0] == CSV_HEADER
        rows = list(csv.DictReader(io.StringIO(text)))
        assert len(rows) == 6
        assert rows[0]["u"] == "{1}"
        assert rows[3]["u"] == "{1,2}"
        assert rows[0]["eff_corr1"] == "1"
        # shortest round-trip decimals
        got = float(rows[0]["var_corr1"])
        assert got == table.rows[0].var_corr1

    def test_empty_table_is_header_only(self, tmp_path):
        table = EfficiencyTable(rows=[], model_name="none", n=0, replicates=0, seed=0)
        path = tmp_path / "empty.csv"
        write_csv(table, path)
        assert path.read_text().strip() == CSV_HEADER

    def test_io_error_names_path(self):
        table = EfficiencyTable(rows=[], model_name="none", n=0, replicates=0, seed=0)
        with pytest.raises(OSError, match="no/such/dir"):
            write_csv(table, "/no/such/dir/table.csv")

    def test_csv_text_matches_file(self, tmp_path):
        table = g_function_study(n=5_000, replicates=2, seed=1)
        path = tmp_path / "t.csv"
        write_csv(table, path)
        assert path.read_text() == csv_text(table)


class TestConfigJson:
    def test_roundtrip(self):
        doc = {
            "model": "product6",
            "us": [[1], [5, 6]],
            "n": 5000,
            "replicates": 2,
            "seed": 9,
            "center": "mean",
        }
        cfg = config_from_json(doc)
        assert cfg.center is None
        assert cfg.us == (u_of([1], 6), u_of([5, 6], 6))
        table = run_efficiency_experiment(cfg)
        assert len(table.rows) == 2

    def test_nested_model_document(self):
        cfg = config_from_json(
            {
                "model": {"kind": "g-function", "a": [19, 9, 4]},
                "us": [[1]],
                "n": 100,
                "replicates": 1,
                "seed": 0,
            }
        )
        assert cfg.model.dim == 3

    def test_kind_aliases(self):
        cfg = config_from_json(
            {
                "model": "g",
                "us": [[1]],
                "n": 100,
                "replicates": 1,
                "seed": 0,
                "kinds": ["corr1", "corr2"],
            }
        )
        assert cfg.kinds == ("correlation1", "correlation2")

    def test_unknown_and_missing_keys(self):
        with pytest.raises(ValueError, match="unknown experiment keys"):
            config_from_json({"model": "g", "us": [[1]], "n": 10, "replicates": 1, "seed": 0, "x": 1})
        with pytest.raises(ValueError, match="needs 'seed'"):
            config_from_json({"model": "g", "us": [[1]], "n": 10, "replicates": 1})

    def test_partial_kinds_leave_missing_columns_empty(self):
        cfg = config_from_json(
            {
                "model": "g",
                "us": [[1]],
                "n": 2000,
                "replicates": 2,
                "seed": 0,
                "kinds": ["corr1", "orcl2"],
            }
        )
        table = run_efficiency_experiment(cfg)
        row = table.rows[0]
        assert row.var_corr2 is None and row.eff_corr2 is None
        assert row.eff_orcl2 is not None
        text = csv_text(table)
        parsed = list(csv.DictReader(io.StringIO(text)))[0]
        assert parsed["var_corr2"] == ""

    def test_jackknife_se_needs_replicates(self):
        table = g_function_study(n=2_000, replicates=1, seed=1)
        assert table.rows[0].se_eff_corr2 is None
