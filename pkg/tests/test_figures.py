import numpy as np
import pytest

from consenslab.analysis import (
    blinding_residual,
    conventional_weights,
)
from consenslab.errors import ConfigError
from consenslab.figures import (
    FIGURES,
    build_fig2,
    build_fig3,
    build_fig5,
    build_fig6,
    build_fig7,
    csv_body,
    deflection_surface_profiles,
    demo_graph,
    render_csv,
    reproduce_figure,
)


class TestCsvPlumbing:
    def test_metadata_lines_are_comments(self):
        text = render_csv({"seed": 1}, ["a", "b"], [(1, 2.5)])
        lines = text.splitlines()
        assert lines[0] == "# seed = 1"
        assert lines[1] == "a,b"
        assert lines[2] == "1,2.5"

    def test_body_strips_metadata(self):
        text = render_csv({"seed": 1, "x": "y"}, ["a"], [(1,), (2,)])
        assert csv_body(text) == "a\n1\n2\n"

    def test_float_format_is_stable(self):
        a = render_csv({}, ["v"], [(0.30000000000000004,)])
        b = render_csv({}, ["v"], [(0.1 + 0.2,)])
        assert a == b


class TestDeflectionSurface:
    def test_zero_locus_matches_residual_roots(self):
        _, header, rows = build_fig2(0)
        assert header == ["P", "delta", "deflection"]
        zero_rows = [(p, d) for p, d, v in rows if v <= 1e-12]
        assert zero_rows, "the surface must contain exact blinding points"
        for p, d, v in rows:
            profiles = deflection_surface_profiles(p, d)
            residual = blinding_residual(
                profiles, conventional_weights([q.sensing for q in profiles])
            )
            if v <= 1e-12:
                assert abs(residual) <= 1e-6
            else:
                assert abs(residual) > 1e-6

    def test_grid_covers_probability_range(self):
        _, _, rows = build_fig2(0)
        ps = {p for p, _, _ in rows}
        assert min(ps) == pytest.approx(0.05)
        assert max(ps) == pytest.approx(1.0)


class TestTransientFigures:
    def test_attack_degrades_first_step(self):
        _, _, rows = build_fig3(0)
        first = np.array([(r[2], r[3]) for r in rows if r[0] == 1])
        assert first[:, 1].mean() < first[:, 0].mean()
        arr = np.array([(r[2], r[3]) for r in rows])
        assert np.all((arr >= 0) & (arr <= 1))
        assert len(rows) == 20 * 6

    def test_false_alarm_rises_first_step(self):
        from consenslab.figures import build_fig4

        _, _, rows = build_fig4(0)
        first = np.array([(r[2], r[3]) for r in rows if r[0] == 1])
        assert first[:, 1].mean() > first[:, 0].mean()


class TestConvergenceFigure:
    def test_trajectory_reaches_weighted_average(self):
        meta, header, rows = build_fig5(0)
        assert header[0] == "iteration"
        final = np.array(rows[-1][1:])
        target = float(meta["weighted_average"])
        assert target == pytest.approx(24.60 / 4.46, abs=1e-10)
        assert np.abs(final - target).max() <= 1e-3
        assert meta["converged_at"] is not None


class TestRocFigures:
    def test_scheme_curves_present(self):
        _, header, rows = build_fig6(0)
        assert header == ["scheme", "pf", "pd"]
        schemes = {r[0] for r in rows}
        assert schemes == {"optimal", "equal-gain", "exclusion"}

    def test_learning_gap_small_at_final_iteration(self):
        meta, _, rows = build_fig7(20240601)
        assert float(meta["auc_gap_final"]) <= 0.02
        curves = {r[0] for r in rows}
        assert "known_optimal" in curves
        assert "learned_iter_4" in curves


class TestReproduce:
    def test_unknown_name_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="choices"):
            reproduce_figure("fig99", out_dir=str(tmp_path))

    def test_all_figures_render(self, tmp_path):
        for name in FIGURES:
            path = reproduce_figure(name, out_dir=str(tmp_path))
            text = open(path).read()
            assert csv_body(text).count("\n") > 1

    @pytest.mark.parametrize("name", ["fig5", "fig7"])
    def test_byte_identical_bodies(self, name, tmp_path):
        a = open(reproduce_figure(name, out_dir=str(tmp_path / "a"), seed=5)).read()
        b = open(reproduce_figure(name, out_dir=str(tmp_path / "b"), seed=5)).read()
        assert csv_body(a) == csv_body(b)

    def test_demo_graph_is_connected(self):
        from consenslab.topology import is_connected

        assert is_connected(demo_graph())
