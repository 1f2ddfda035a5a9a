from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence
import argparse
import os
import logging
import sys

import toml
from pydantic import ValidationError

from analysis.csv_utils import write_rows
from analysis.entropy import entropy_stats
from analysis.features import analyze, export_features
from analysis.spectra import spectra
from analysis.texture import texture_kde
from detector.smash_reconstruct import smash
from detector.srm_residual import bank_table
from imaging.image_degrade import DegradeSpec
from imaging.image_io import ImageLoadError, save_png
from tensor.tensor_core import ShapeError
from training.constants import CONFIG_ENV_VAR
from training.toy_dataset import ToyConfig, generate_toy_dataset
from training.train_checkpoint import CheckpointError, load_run_model
from training.train_config import RunConfig, load_run_config
from training.train_dataset import DatasetManifest, load_normalized
from training.train_experiments import export_mask_maps, run_ablation, run_group_sweep, run_robustness
from training.train_loop import TrainingDivergedError, evaluate, make_run_dir, train

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s %(message)s'


class CliError(Exception):
    """
    One-line failure reported to the user.
    """


class S2FNetCli:
    """
    Command-line surface of the detector: training, evaluation, experiments and diagnostics.
    Every command writes its artifacts under `--out` or a fresh run directory.
    """
    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args
        self.cfg: Optional[RunConfig] = None

    def load_config(self) -> RunConfig:
        """
        Loads the run config; validation errors become a single line naming the file and field.
        """
        file_name = self.args.config or os.environ.get(CONFIG_ENV_VAR, '')
        try:
            self.cfg = load_run_config(self.args.config, overrides=self.args.set or [])
            return self.cfg
        except FileNotFoundError:
            raise CliError(f'File "{file_name}" does not exist!') from None
        except toml.TomlDecodeError as error:
            raise CliError(f'File "{file_name}" - {error}') from None
        except ValidationError as error:
            # Custom error msg
            error_data: List[Dict[str, Any]] = error.errors()
            error_msg: str = error_data[0]['msg']
            item_field: str = '.'.join(str(item) for item in error_data[0]['loc'])
            raise CliError(f'file "{file_name}" - "{item_field}" {error_msg}') from None

    def load_manifest(self) -> DatasetManifest:
        return DatasetManifest.from_csv(self.args.manifest)

    def out_dir(self) -> Path:
        if getattr(self.args, 'out', None):
            out = Path(self.args.out)
            out.mkdir(parents=True, exist_ok=True)
            return out
        return make_run_dir(self.cfg)

    def run(self) -> int:
        self.load_config()
        handler: Callable[[], None] = getattr(self, 'cmd_' + self.args.command.replace('-', '_'))
        handler()
        return 0

    def cmd_train(self) -> None:
        run_dir = self.out_dir()
        result = train(self.load_manifest(), self.cfg, run_dir=run_dir)
        last = result.history[-1]
        print(f'run_dir={run_dir} epochs={len(result.history)} loss={last.loss:.6f} acc={last.acc:.4f} '
              f'best={result.best_checkpoint}')

    def cmd_eval(self) -> None:
        model = load_run_model(self.args.checkpoint, self.cfg)
        degrade = DegradeSpec.from_text(self.args.degrade) if self.args.degrade else None
        report = evaluate(model, self.load_manifest(), self.cfg, degrade=degrade,
                          variant=degrade.tag if degrade else 'clean')
        out = self.out_dir()
        report.to_json(out / 'report.json')
        report.to_csv(out / 'report.csv')
        print(report.json(indent=2))

    def cmd_analyze(self) -> None:
        model = load_run_model(self.args.checkpoint, self.cfg)
        result = analyze(self.args.image, model, self.cfg)
        if self.args.json:
            print(result.json(indent=2))
            return
        print(f'path={result.path} prob_fake={result.prob_fake:.6f} label={result.label}')
        for branch, energy in (('high', result.energy_high), ('low', result.energy_low)):
            values = 'bypassed' if energy is None else ' '.join(f'{value:.6g}' for value in energy)
            print(f'energy_{branch}: {values}')

    def cmd_smash(self) -> None:
        pair = smash(load_normalized(self.args.image, self.cfg), self.cfg.smash)
        out = self.out_dir()
        save_png(pair.rich, out / 'rich.png')
        save_png(pair.poor, out / 'poor.png')
        write_rows(out / 'patches.csv',
                   [{'view': view, 'index': index, 'x0': patch.x0, 'y0': patch.y0, 'ldiv': patch.ldiv}
                    for view, patches in (('rich', pair.rich_patches), ('poor', pair.poor_patches))
                    for index, patch in enumerate(patches)])
        print(f'mode={pair.mode.value} rich={out / "rich.png"} poor={out / "poor.png"}')

    def cmd_srm_dump(self) -> None:
        path = write_rows(self.out_dir() / 'srm_bank.csv', bank_table())
        print(path)

    def cmd_mask_viz(self) -> None:
        model = load_run_model(self.args.checkpoint, self.cfg)
        for path in export_mask_maps(model, self.out_dir()):
            print(path)

    def cmd_ablate(self) -> None:
        table = run_ablation(self.load_manifest(), self.cfg, out_dir=self.out_dir())
        for row in table.rows:
            print(' '.join(f'{key}={value}' for key, value in row.items()))

    def cmd_sweep_groups(self) -> None:
        table = run_group_sweep(self.load_manifest(), self.cfg, groups=self.args.groups, out_dir=self.out_dir())
        for row in table.rows:
            print(' '.join(f'{key}={value}' for key, value in row.items()))

    def cmd_robustness(self) -> None:
        model = load_run_model(self.args.checkpoint, self.cfg)
        table = run_robustness(self.load_manifest(), model, self.cfg, out_dir=self.out_dir())
        for row in table.rows:
            print(' '.join(f'{key}={value}' for key, value in row.items()))

    def cmd_spectra(self) -> None:
        report = spectra(self.args.directory, workers=self.cfg.train.workers)
        for path in report.write(self.out_dir()):
            print(path)

    def cmd_entropy_stats(self) -> None:
        stats = entropy_stats(self.args.directory, window=self.args.window, bins=self.args.bins,
                              workers=self.cfg.train.workers)
        print(stats.write(self.out_dir() / 'entropy_hist.csv'))

    def cmd_texture_kde(self) -> None:
        for path in texture_kde(self.args.directory, self.cfg).write(self.out_dir()):
            print(path)

    def cmd_export_features(self) -> None:
        model = load_run_model(self.args.checkpoint, self.cfg)
        print(export_features(self.load_manifest(), model, self.cfg, self.out_dir() / 'features.csv'))

    def cmd_make_toy(self) -> None:
        toy = ToyConfig(count=self.args.count, size=self.args.size, seed=self.args.seed)
        manifest = generate_toy_dataset(self.args.out, toy)
        print(f'manifest={Path(self.args.out) / "manifest.csv"} records={len(manifest)}')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='s2fnet', description='AI-generated image detector')
    parser.add_argument('-c', '--config', type=str,
                        help=f'TOML run config (default: ${CONFIG_ENV_VAR}, else built-in defaults)')
    parser.add_argument('--set', action='append', metavar='SECTION.KEY=VALUE',
                        help='Override one config value, e.g. --set lfa.groups=16 (repeatable)')
    parser.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='Logging level (default: INFO)')
    commands = parser.add_subparsers(dest='command', metavar='COMMAND', required=True)

    def command(name: str, help_text: str, manifest: bool = False, checkpoint: bool = False,
                out_help: str = 'Output directory (default: a new run directory)') -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text, description=help_text)
        if manifest:
            sub.add_argument('-m', '--manifest', required=True, help='CSV manifest with path,label,source')
        if checkpoint:
            sub.add_argument('-k', '--checkpoint', required=True, help='Checkpoint file')
        sub.add_argument('-o', '--out', help=out_help)
        return sub

    command('train', 'Train a detector on a manifest', manifest=True)
    sub = command('eval', 'Evaluate a checkpoint on a manifest', manifest=True, checkpoint=True)
    sub.add_argument('--degrade', help='Single degradation, e.g. jpeg:95, blur:1.0, downsample:0.5')
    sub = command('analyze', 'Predict one image and report group energies', checkpoint=True)
    sub.add_argument('image', help='Image file')
    sub.add_argument('--json', action='store_true', help='Print the result as JSON')
    sub = command('smash', 'Write the rich and poor views of one image')
    sub.add_argument('image', help='Image file')
    command('srm-dump', 'Write the 30 SRM kernels as CSV')
    command('mask-viz', 'Write sigmoid(M) and M - M_init per branch', checkpoint=True)
    command('ablate', 'Train and evaluate full, no_lfa, no_low and no_high', manifest=True)
    sub = command('sweep-groups', 'Train one model per LFA group count', manifest=True)
    sub.add_argument('--groups', type=int, nargs='+', default=[8, 16, 32], help='Group counts (default: 8 16 32)')
    command('robustness', 'Evaluate clean, JPEG(95), blur(1.0) and downsample(0.5)', manifest=True,
            checkpoint=True)
    for name, help_text in (('spectra', 'Average FFT and DCT maps of a directory'),
                            ('texture-kde', 'Texture richness density of a directory')):
        sub = command(name, help_text)
        sub.add_argument('directory', help='Image directory')
    sub = command('entropy-stats', 'Local entropy histogram of a directory')
    sub.add_argument('directory', help='Image directory')
    sub.add_argument('--window', type=int, default=9, help='Odd window side (default: 9)')
    sub.add_argument('--bins', type=int, default=64, help='Histogram bins (default: 64)')
    command('export-features', 'Write pooled 32-d features per record', manifest=True, checkpoint=True)
    sub = commands.add_parser('make-toy', help='Generate the synthetic real/fake fixture')
    sub.add_argument('-o', '--out', required=True, help='Output directory')
    sub.add_argument('--count', type=int, default=500, help='Images per class (default: 500)')
    sub.add_argument('--size', type=int, default=64, help='Image side (default: 64)')
    sub.add_argument('--seed', type=int, default=0, help='Generator seed (default: 0)')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT, stream=sys.stderr)
    try:
        return S2FNetCli(args).run()
    except CliError as error:
        print(f'Error: {error}', file=sys.stderr)
    except (CheckpointError, ImageLoadError, ShapeError, TrainingDivergedError) as error:
        print(f'Error: {error}', file=sys.stderr)
    except FileNotFoundError as error:
        print(f'Error: {error}', file=sys.stderr)
    except ValidationError as error:
        error_data: List[Dict[str, Any]] = error.errors()
        item_field = '.'.join(str(item) for item in error_data[0]['loc'])
        print(f'Error: "{item_field}" {error_data[0]["msg"]}', file=sys.stderr)
    except (OSError, ValueError) as error:
        print(f'Error: {error}', file=sys.stderr)
    return 1


if __name__ == '__main__':
    sys.exit(main())
