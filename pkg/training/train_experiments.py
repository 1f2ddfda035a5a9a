"""
Ablation, group-count sweep, robustness evaluation and mask exports.
"""
import logging
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Union

from analysis.csv_utils import write_matrix, write_rows
from detector.constants import AblationEnum
from detector.s2f_net import S2FNet, build_model
from imaging.image_degrade import DegradeSpec, robustness_specs
from training.train_config import RunConfig
from training.train_dataset import DatasetManifest, ImageCache
from training.train_loop import TrainResult, Trainer, evaluate
from training.train_metrics import EvalReport

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ExperimentTable(NamedTuple):
    rows: List[Dict[str, object]]
    reports: Dict[str, EvalReport]
    results: Dict[str, TrainResult]


def _eval_manifest(manifest: DatasetManifest, cfg: RunConfig):
    """
    Train and held-out splits; the train split is evaluated when no records are held out.
    """
    train_manifest, val_manifest = manifest.split(cfg.seed, cfg.train.val_fraction)
    return train_manifest, (val_manifest if val_manifest is not None else train_manifest)


def _fmt(value: Optional[float]) -> object:
    return '' if value is None else value


def export_mask_maps(model: S2FNet, out_dir: PathLike, suffix: str = '') -> List[Path]:
    """
    Writes sigmoid(M) and M - M_init per branch as CSV matrices.
    """
    out_dir = Path(out_dir)
    paths = []
    for branch in (model.lfa.high, model.lfa.low):
        if branch.mask is None:
            continue
        name = branch.branch.value
        paths.append(write_matrix(out_dir / f'mask_sigmoid_{name}{suffix}.csv', branch.mask.gate()))
        paths.append(write_matrix(out_dir / f'mask_diff_{name}{suffix}.csv', branch.mask.difference()))
    return paths


def run_ablation(manifest: DatasetManifest, base_cfg: RunConfig, out_dir: Optional[PathLike] = None,
                 variants: Sequence[AblationEnum] = tuple(AblationEnum)) -> ExperimentTable:
    """
    Trains and evaluates every ablation variant with identical seeds; deltas are relative to `full`.
    """
    train_manifest, eval_manifest = _eval_manifest(manifest, base_cfg)
    cache = ImageCache() if base_cfg.train.cache_images else None
    reports, results = {}, {}
    for variant in variants:
        variant = AblationEnum(variant)
        cfg = base_cfg.copy(update={'ablation': variant})
        results[variant.value] = Trainer(cfg).fit(train_manifest)
        reports[variant.value] = evaluate(results[variant.value].model, eval_manifest, cfg,
                                          variant=variant.value, cache=cache)
    reference = reports.get(AblationEnum.full.value)
    rows = []
    for name, report in reports.items():
        rows.append({
            'variant': name,
            'acc': report.mean_acc,
            'ap': _fmt(report.mean_ap),
            'delta_acc': '' if reference is None else report.mean_acc - reference.mean_acc,
            'delta_ap': '' if reference is None or reference.mean_ap is None or report.mean_ap is None
            else report.mean_ap - reference.mean_ap,
        })
    if out_dir is not None:
        write_rows(Path(out_dir) / 'ablation.csv', rows)
        for name, report in reports.items():
            report.to_json(Path(out_dir) / f'report_{name}.json')
    return ExperimentTable(rows=rows, reports=reports, results=results)


def run_group_sweep(manifest: DatasetManifest, cfg: RunConfig, groups: Sequence[int] = (8, 16, 32),
                    out_dir: Optional[PathLike] = None) -> ExperimentTable:
    """
    Trains one model per group count and exports learned-minus-initial masks at step 0 and after training.
    """
    channels = cfg.lfa.channels
    for count in groups:
        if count < 1 or channels % count:
            raise ValueError(f'Group count {count} is invalid. Should divide {channels} channels.')
    train_manifest, eval_manifest = _eval_manifest(manifest, cfg)
    cache = ImageCache() if cfg.train.cache_images else None
    rows, reports, results = [], {}, {}
    for count in groups:
        sweep_cfg = cfg.copy(update={'lfa': cfg.lfa.copy(update={'groups': count})})
        model = build_model(sweep_cfg.model_config())
        group_dir = Path(out_dir) / f'g{count}' if out_dir is not None else None
        if group_dir is not None:
            export_mask_maps(model, group_dir, suffix='_init')
        results[str(count)] = Trainer(sweep_cfg, model=model).fit(train_manifest)
        if group_dir is not None:
            export_mask_maps(model, group_dir, suffix='_final')
        report = evaluate(model, eval_manifest, sweep_cfg, variant=f'g{count}', cache=cache)
        reports[str(count)] = report
        rows.append({'groups': count, 'channels_per_group': channels // count, 'acc': report.mean_acc,
                     'ap': _fmt(report.mean_ap)})
        logger.info('sweep groups=%d acc=%.4f', count, report.mean_acc)
    if out_dir is not None:
        write_rows(Path(out_dir) / 'group_sweep.csv', rows)
    return ExperimentTable(rows=rows, reports=reports, results=results)


def run_robustness(manifest: DatasetManifest, model: S2FNet, cfg: RunConfig,
                   specs: Optional[Sequence[DegradeSpec]] = None,
                   out_dir: Optional[PathLike] = None) -> ExperimentTable:
    """
    Evaluates the clean path and each degradation (applied to the full image before smashing).
    """
    specs = list(specs) if specs is not None else robustness_specs()
    cache = ImageCache() if cfg.train.cache_images else None
    reports = {'clean': evaluate(model, manifest, cfg, variant='clean', cache=cache)}
    for spec in specs:
        reports[spec.tag] = evaluate(model, manifest, cfg, degrade=spec, variant=spec.tag, cache=cache)
    rows = []
    for name, report in reports.items():
        degradation = report.degradation or {'kind': '', 'value': ''}
        rows.append({'variant': name, 'kind': degradation['kind'], 'value': degradation['value'],
                     'acc': report.mean_acc, 'pooled_acc': report.pooled_acc, 'ap': _fmt(report.mean_ap)})
    if out_dir is not None:
        write_rows(Path(out_dir) / 'robustness.csv', rows)
        for name, report in reports.items():
            report.to_json(Path(out_dir) / f'report_{name}.json')
    return ExperimentTable(rows=rows, reports=reports, results={})
