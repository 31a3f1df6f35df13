import numpy as np
import pytest

from mssvdd import (
    ConfusionMatrix,
    DataError,
    GridSpec,
    KernelParams,
    MultiModalDataset,
    SolverError,
    TrainConfig,
    compute_metrics,
    default_grid,
    grid_search,
    nested_cv,
    run_cv,
    synth_multimodal,
)
from mssvdd.evaluation import (
    confusion_from_labels,
    expand_grid,
    grid_table_to_csv,
    mean_metrics,
    report_to_csv,
    report_to_text,
)


class TestComputeMetrics:
    def test_majority_positive_reference_row(self):
        m = compute_metrics(ConfusionMatrix(tp=62, fn=26, fp=14, tn=28))
        assert m.sen == pytest.approx(0.7045, abs=1e-4)
        assert m.spe == pytest.approx(0.6667, abs=1e-4)
        assert m.pre == pytest.approx(0.8158, abs=1e-4)
        assert m.f1 == pytest.approx(0.7561, abs=1e-4)
        assert m.acc == pytest.approx(0.6923, abs=1e-4)
        assert m.gm == pytest.approx(0.6853, abs=1e-4)

    def test_minority_positive_reference_row(self):
        m = compute_metrics(ConfusionMatrix(tp=28, fn=14, fp=21, tn=67))
        assert m.sen == pytest.approx(0.6667, abs=1e-4)
        assert m.spe == pytest.approx(0.7614, abs=1e-4)
        assert m.pre == pytest.approx(0.5714, abs=1e-4)
        assert m.f1 == pytest.approx(0.6154, abs=1e-4)
        assert m.acc == pytest.approx(0.7308, abs=1e-4)
        assert m.gm == pytest.approx(0.7124, abs=1e-4)

    def test_no_positives_zero_rule(self):
        m = compute_metrics(ConfusionMatrix(tp=0, fn=0, fp=0, tn=10))
        assert m.sen == 0.0
        assert m.pre == 0.0
        assert m.f1 == 0.0
        assert m.spe == 1.0
        assert m.acc == 1.0
        assert m.gm == 0.0

    def test_scale_free(self):
        base = compute_metrics(ConfusionMatrix(5, 3, 2, 7))
        scaled = compute_metrics(ConfusionMatrix(50, 30, 20, 70))
        assert base == scaled

    def test_gm_is_root_of_product(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            cm = ConfusionMatrix(*[int(x) for x in rng.integers(0, 40, size=4)])
            if cm.total == 0:
                continue
            m = compute_metrics(cm)
            assert m.gm**2 == pytest.approx(m.sen * m.spe, abs=1e-12)
            if m.pre + m.sen > 0:
                assert m.f1 == pytest.approx(
                    2 * m.pre * m.sen / (m.pre + m.sen), abs=1e-12
                )

    def test_empty_matrix_rejected(self):
        with pytest.raises(DataError):
            compute_metrics(ConfusionMatrix(0, 0, 0, 0))

    def test_negative_counts_rejected(self):
        with pytest.raises(DataError):
            ConfusionMatrix(-1, 0, 0, 2)


class TestConfusionFromLabels:
    def test_counts(self):
        y = np.array([1, 1, 0, 0, 1])
        p = np.array([1, 0, 0, 1, 1])
        cm = confusion_from_labels(y, p)
        assert (cm.tp, cm.fn, cm.fp, cm.tn) == (2, 1, 1, 1)

    def test_addition(self):
        a = ConfusionMatrix(1, 2, 3, 4)
        b = ConfusionMatrix(4, 3, 2, 1)
        assert (a + b) == ConfusionMatrix(5, 5, 5, 5)


class TestRunCv:
    def test_pooled_total_equals_dataset_size(self):
        data = synth_multimodal(26, 14, 2, [3, 3], 4.0, seed=1)
        config = TrainConfig(d=2, eta=0.01, c_penalty=0.5, max_iter=3)
        report = run_cv(data, config, k=5, seed=2)
        assert report.pooled_confusion.total == 40
        assert len(report.fold_metrics) == 5

    def test_pooled_total_on_imbalanced_130_sample_dataset(self):
        # 88/42 over two views, the shape of the motivating benchmark
        data = synth_multimodal(88, 42, 2, [4, 4], 3.0, seed=42)
        config = TrainConfig(d=2, eta=0.0, c_penalty=0.3, max_iter=1)
        report = run_cv(data, config, k=5, seed=42)
        assert report.pooled_confusion.total == 130
        sizes = [cm.total for cm in report.fold_confusions]
        assert sizes == [26] * 5

    def test_perfect_separation_gm_one_per_fold(self):
        data = synth_multimodal(20, 20, 2, [3, 3], 50.0, seed=3)
        config = TrainConfig(d=2, eta=0.0, c_penalty=1.0, max_iter=1)
        report = run_cv(data, config, k=5, seed=4)
        for m in report.fold_metrics:
            assert m.gm == pytest.approx(1.0)

    def test_leave_one_out_mean_equals_pooled_accuracy(self):
        data = synth_multimodal(8, 8, 1, [2], 8.0, seed=5)
        config = TrainConfig(
            d=1, eta=0.0, c_penalty=1.0, max_iter=1, regularizer="psi0"
        )
        report = run_cv(data, config, k=16, seed=6)
        assert report.mean_metrics.acc == pytest.approx(report.pooled_metrics.acc)

    def test_reproducible(self):
        data = synth_multimodal(15, 10, 2, [3, 3], 3.0, seed=7)
        config = TrainConfig(d=2, eta=0.01, c_penalty=0.5, max_iter=3)
        a = run_cv(data, config, k=5, seed=8)
        b = run_cv(data, config, k=5, seed=8)
        assert a.fold_metrics == b.fold_metrics
        assert a.pooled_confusion == b.pooled_confusion

    def test_requires_labels(self):
        mods = synth_multimodal(10, 10, 1, [2], 3.0, seed=9).modalities
        unlabeled = MultiModalDataset(mods)
        with pytest.raises(DataError):
            run_cv(unlabeled, TrainConfig(d=1, regularizer="psi0"), k=5, seed=0)

    def test_mean_and_pooled_both_reported(self):
        data = synth_multimodal(15, 10, 2, [3, 3], 2.0, seed=10)
        config = TrainConfig(d=2, eta=0.01, c_penalty=0.5, max_iter=2)
        report = run_cv(data, config, k=5, seed=11)
        assert report.mean_metrics is not None
        assert report.pooled_metrics is not None

    def test_normalization_flag(self):
        data = synth_multimodal(15, 10, 2, [3, 3], 4.0, seed=12)
        config = TrainConfig(d=2, eta=0.01, c_penalty=0.5, max_iter=2)
        plain = run_cv(data, config, k=5, seed=13, normalize=False)
        scaled = run_cv(data, config, k=5, seed=13, normalize=True)
        assert plain.pooled_confusion.total == scaled.pooled_confusion.total

    def test_baseline_model_kinds(self):
        data = synth_multimodal(20, 15, 2, [3, 3], 6.0, seed=14)
        svdd_cfg = TrainConfig(model_kind="svdd", c_penalty=0.6)
        report = run_cv(data, svdd_cfg, k=5, seed=15)
        assert report.mean_metrics.gm > 0.8
        ocsvm_cfg = TrainConfig(model_kind="ocsvm", nu=0.3)
        report2 = run_cv(data, ocsvm_cfg, k=5, seed=15)
        assert report2.pooled_confusion.total == 35


class TestGridSearch:
    def _separable(self, seed=16):
        return synth_multimodal(20, 16, 2, [3, 3], 6.0, seed=seed)

    def _singleton_grid(self, **over):
        base = dict(
            sigma_grid=(1.0,),
            eta_grid=(0.01,),
            beta_grid=(0.01,),
            c_grid=(0.5,),
            d_grid=(2,),
            update_strategies=("SD-",),
            regularizers=("w0",),
            decision_strategies=("ds1",),
        )
        base.update(over)
        return GridSpec(**base)

    def test_singleton_grid_returns_that_cell(self):
        data = self._separable()
        grid = self._singleton_grid()
        base = TrainConfig(max_iter=2)
        result = grid_search(data, grid, base, inner_k=4, seed=17)
        assert len(result.cells) == 1
        assert result.best_config.d == 2
        assert result.best_config.c_penalty == 0.5

    def test_tie_broken_by_smaller_d(self):
        # Degenerate data scores gm = 1.0 exactly for every d, forcing a tie:
        # all targets coincide (radius 0) and all outliers sit far away.
        from mssvdd import FeatureMatrix

        n_t, n_o = 20, 16
        mods = tuple(
            FeatureMatrix(
                np.hstack([np.ones((4, n_t)), 100.0 * np.ones((4, n_o))])
            )
            for _ in range(2)
        )
        labels = np.array([1] * n_t + [0] * n_o)
        data = MultiModalDataset(mods, labels)
        grid = self._singleton_grid(d_grid=(3, 2), eta_grid=(0.0,))
        base = TrainConfig(max_iter=1)
        result = grid_search(data, grid, base, inner_k=4, seed=19)
        gms = [c.mean_gm for c in result.cells]
        assert gms[0] == gms[1] == 1.0
        assert result.best_config.d == 2

    def test_tie_broken_by_grid_order_when_identical(self):
        data = self._separable(seed=40)
        grid = self._singleton_grid(d_grid=(2, 2))
        result = grid_search(data, grid, TrainConfig(max_iter=1), inner_k=4, seed=41)
        assert result.cells[0].mean_gm == result.cells[1].mean_gm
        assert result.best_index == 0

    def test_sigma_extremes_composite(self):
        data = synth_multimodal(18, 14, 2, [3, 3], 6.0, seed=20)
        grid = self._singleton_grid(sigma_grid=(0.01, 1000.0), eta_grid=(0.001,))
        base = TrainConfig(
            max_iter=3,
            kernelized=True,
            kernel_params=KernelParams(kind="composite"),
        )
        result = grid_search(data, grid, base, inner_k=4, seed=21)
        ok = [c for c in result.cells if c.status == "ok"]
        assert len(ok) == 2
        best = result.best_config.kernel_params.sigma
        scores = {c.config.kernel_params.sigma: c.mean_gm for c in ok}
        rejected = [s for s in scores if s != best][0]
        assert scores[best] > scores[rejected]

    def test_all_cells_failed_carries_diagnostics(self):
        data = self._separable()
        grid = self._singleton_grid(c_grid=(0.001,))  # infeasible: C*M < 1
        base = TrainConfig(max_iter=1)
        with pytest.raises(SolverError, match="every grid cell failed"):
            grid_search(data, grid, base, inner_k=4, seed=22)

    def test_selection_ignores_test_labels(self):
        # Permuting labels outside the searched data cannot change the
        # winner: grid search only ever sees the training split it is given.
        data = self._separable(seed=23)
        labels = np.asarray(data.labels)
        train_idx = np.arange(0, 30)
        test_idx = np.arange(30, 36)
        train_set = data.subset(train_idx)
        grid = self._singleton_grid(d_grid=(1, 2))
        base = TrainConfig(max_iter=2)
        first = grid_search(train_set, grid, base, inner_k=4, seed=24)
        flipped = labels.copy()
        flipped[test_idx] = 1 - flipped[test_idx]
        data2 = MultiModalDataset(data.modalities, flipped, data.sample_ids)
        second = grid_search(data2.subset(train_idx), grid, base, inner_k=4, seed=24)
        assert first.best_index == second.best_index
        assert first.best_config == second.best_config

    def test_grid_order_deterministic(self):
        grid = GridSpec(
            sigma_grid=(1.0,),
            eta_grid=(0.1, 0.2),
            beta_grid=(0.0,),
            c_grid=(0.5, 0.6),
            d_grid=(1, 2),
            update_strategies=("SD-",),
            regularizers=("w0",),
            decision_strategies=("ds1",),
        )
        cells = expand_grid(grid, TrainConfig())
        assert len(cells) == 8
        assert [c.d for c in cells[:4]] == [1, 1, 1, 1]
        assert cells[0].c_penalty == 0.5 and cells[2].c_penalty == 0.6
        # kappa derived from d per cell
        assert cells[0].kernel_params.kappa == pytest.approx(1.0)
        assert cells[4].kernel_params.kappa == pytest.approx(0.5)

    def test_empty_grid_axis_rejected(self):
        with pytest.raises(Exception):
            GridSpec(sigma_grid=())


class TestNestedCv:
    def test_nested_runs_and_reports(self):
        data = synth_multimodal(18, 14, 2, [3, 3], 6.0, seed=25)
        grid = GridSpec(
            sigma_grid=(1.0,),
            eta_grid=(0.01,),
            beta_grid=(0.0,),
            c_grid=(0.5,),
            d_grid=(2,),
            update_strategies=("SD-",),
            regularizers=("w0",),
            decision_strategies=("ds1",),
        )
        base = TrainConfig(max_iter=2)
        report = nested_cv(data, grid, base, outer_k=4, inner_k=4, seed=26)
        assert report.selection == "nested"
        assert len(report.fold_configs) == 4
        assert report.pooled_confusion.total == 32
        assert report.max_ortho_error is not None

    def test_global_mode(self):
        data = synth_multimodal(18, 14, 2, [3, 3], 6.0, seed=27)
        grid = GridSpec(
            sigma_grid=(1.0,),
            eta_grid=(0.01,),
            beta_grid=(0.0,),
            c_grid=(0.5,),
            d_grid=(1, 2),
            update_strategies=("SD-",),
            regularizers=("w0",),
            decision_strategies=("ds1",),
        )
        base = TrainConfig(max_iter=2)
        report = nested_cv(
            data, grid, base, outer_k=4, inner_k=4, seed=28, selection="global"
        )
        assert report.selection == "global"
        assert len(set(c.d for c in report.fold_configs)) == 1

    def test_deterministic(self):
        data = synth_multimodal(15, 12, 2, [3, 3], 4.0, seed=29)
        grid = GridSpec(
            sigma_grid=(1.0,),
            eta_grid=(0.01,),
            beta_grid=(0.0,),
            c_grid=(0.5,),
            d_grid=(1, 2),
            update_strategies=("SD-",),
            regularizers=("w0",),
            decision_strategies=("ds1",),
        )
        base = TrainConfig(max_iter=2)
        a = nested_cv(data, grid, base, outer_k=3, inner_k=3, seed=30)
        b = nested_cv(data, grid, base, outer_k=3, inner_k=3, seed=30)
        assert a.fold_metrics == b.fold_metrics
        assert a.fold_configs == b.fold_configs


class TestDefaultGrid:
    def test_reference_grids(self):
        grid = default_grid(2, kernelized=True)
        assert grid.sigma_grid == (1e-2, 1e-1, 1.0, 10.0, 1e2, 1e3)
        assert grid.eta_grid == (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
        assert grid.beta_grid == (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 1e2, 1e3, 1e4)
        assert grid.c_grid == (0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
        assert grid.d_grid == (1, 2, 3, 4, 5)
        assert grid.regularizers == ("w0", "w1", "w2", "w3", "w4", "w5", "w6")

    def test_unimodal_grid(self):
        grid = default_grid(1, kernelized=False)
        assert grid.update_strategies == ("SD-", "SD+")
        assert grid.regularizers == ("psi0", "psi1", "psi2", "psi3")
        assert grid.decision_strategies == ("ds1",)


class TestReportRendering:
    def _report(self):
        data = synth_multimodal(12, 10, 2, [3, 3], 4.0, seed=31)
        config = TrainConfig(d=2, eta=0.01, c_penalty=0.5, max_iter=2)
        return run_cv(data, config, k=4, seed=32)

    def test_csv_layout(self):
        report = self._report()
        text = report_to_csv(report)
        lines = text.strip().split("\n")
        assert lines[0].startswith("row,fold,tp,fn,fp,tn,sen")
        assert len([l for l in lines if l.startswith("fold,")]) == 4
        assert any(l.startswith("mean,") for l in lines)
        assert any(l.startswith("pooled,") for l in lines)

    def test_text_has_metric_columns(self):
        report = self._report()
        text = report_to_text(report)
        for col in ("OS", "r", "Sen", "Spe", "Pre", "F1", "Acc", "GM"):
            assert col in text

    def test_grid_table_csv(self):
        data = synth_multimodal(12, 10, 2, [3, 3], 4.0, seed=33)
        grid = GridSpec(
            sigma_grid=(1.0,),
            eta_grid=(0.01,),
            beta_grid=(0.0,),
            c_grid=(0.5,),
            d_grid=(1, 2),
            update_strategies=("SD-",),
            regularizers=("w0",),
            decision_strategies=("ds1",),
        )
        result = grid_search(data, grid, TrainConfig(max_iter=2), inner_k=3, seed=34)
        table = grid_table_to_csv(result)
        lines = table.strip().split("\n")
        assert lines[0].startswith("cell,fold")
        # one mean row per cell plus one row per inner fold
        assert len([l for l in lines if ",mean," in l]) == 2


class TestParallelism:
    def test_parallel_grid_search_matches_sequential(self):
        data = synth_multimodal(16, 12, 2, [3, 3], 4.0, seed=50)
        grid = GridSpec(
            sigma_grid=(1.0,),
            eta_grid=(0.01, 0.1),
            beta_grid=(0.0,),
            c_grid=(0.5, 0.6),
            d_grid=(1, 2),
            update_strategies=("SD-",),
            regularizers=("w0",),
            decision_strategies=("ds1",),
        )
        base = TrainConfig(max_iter=2)
        seq = grid_search(data, grid, base, inner_k=3, seed=51, workers=1)
        par = grid_search(data, grid, base, inner_k=3, seed=51, workers=2)
        assert seq.best_index == par.best_index
        assert [c.mean_gm for c in seq.cells] == [c.mean_gm for c in par.cells]
        assert [c.config for c in seq.cells] == [c.config for c in par.cells]

    def test_parallel_nested_cv_matches_sequential(self):
        data = synth_multimodal(15, 12, 2, [3, 3], 4.0, seed=52)
        grid = GridSpec(
            sigma_grid=(1.0,),
            eta_grid=(0.01,),
            beta_grid=(0.0,),
            c_grid=(0.5,),
            d_grid=(1, 2),
            update_strategies=("SD-",),
            regularizers=("w0",),
            decision_strategies=("ds1",),
        )
        base = TrainConfig(max_iter=2)
        seq = nested_cv(data, grid, base, outer_k=3, inner_k=3, seed=53, workers=1)
        par = nested_cv(data, grid, base, outer_k=3, inner_k=3, seed=53, workers=2)
        assert seq.fold_metrics == par.fold_metrics
        assert seq.fold_configs == par.fold_configs
        assert seq.pooled_confusion == par.pooled_confusion


class TestMeanMetrics:
    def test_average(self):
        a = compute_metrics(ConfusionMatrix(2, 0, 0, 2))
        b = compute_metrics(ConfusionMatrix(1, 1, 1, 1))
        m = mean_metrics([a, b])
        assert m.acc == pytest.approx(0.75)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            mean_metrics([])
