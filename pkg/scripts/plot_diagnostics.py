"""
Renders the CSV outputs of the diagnostic commands as PNG figures.

    python -m scripts.plot_diagnostics runs/<run> [runs/<other run> ...] --out figures/

Each input directory may hold any of: fft_log_magnitude.csv, dct_magnitude.csv, entropy_hist.csv,
texture_kde.csv, mask_sigmoid_*.csv, mask_diff_*.csv. Histograms and densities from several directories are
overlaid on one figure, labelled by directory name.
"""
from pathlib import Path
from typing import List, Optional, Sequence
import argparse
import logging
import sys

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from analysis.csv_utils import read_matrix, read_rows  # noqa: E402

logger = logging.getLogger(__name__)

MAP_FILES = ('fft_log_magnitude.csv', 'dct_magnitude.csv')
MASK_PATTERNS = ('mask_sigmoid_*.csv', 'mask_diff_*.csv')


def plot_map(path: Path, out_dir: Path, prefix: str) -> Path:
    matrix = read_matrix(path)
    if path.stem == 'dct_magnitude':
        matrix = np.log1p(matrix)
    figure, axis = plt.subplots(figsize=(5, 5))
    image = axis.imshow(matrix, cmap='inferno')
    axis.set_title(f'{prefix} {path.stem}')
    axis.axis('off')
    figure.colorbar(image, ax=axis, fraction=0.046)
    target = out_dir / f'{prefix}_{path.stem}.png'
    figure.savefig(target, dpi=120, bbox_inches='tight')
    plt.close(figure)
    return target


def plot_mask(path: Path, out_dir: Path, prefix: str) -> Path:
    matrix = read_matrix(path)
    # Differences are centred on zero
    limit = float(np.abs(matrix).max()) or 1.0
    diverging = path.stem.startswith('mask_diff')
    figure, axis = plt.subplots(figsize=(5, 5))
    image = axis.imshow(matrix, cmap='coolwarm' if diverging else 'viridis',
                        vmin=-limit if diverging else None, vmax=limit if diverging else None)
    axis.set_title(f'{prefix} {path.stem}')
    axis.axis('off')
    figure.colorbar(image, ax=axis, fraction=0.046)
    target = out_dir / f'{prefix}_{path.stem}.png'
    figure.savefig(target, dpi=120, bbox_inches='tight')
    plt.close(figure)
    return target


def plot_entropy(directories: Sequence[Path], out_dir: Path) -> Path:
    figure, axis = plt.subplots(figsize=(7, 4))
    for directory in directories:
        rows = read_rows(directory / 'entropy_hist.csv')
        centers = [(float(row['bin_left']) + float(row['bin_right'])) / 2 for row in rows]
        axis.plot(centers, [float(row['density']) for row in rows], label=directory.name)
    axis.set_xlabel('local entropy (bits)')
    axis.set_ylabel('density')
    axis.legend()
    axis.grid(True, alpha=0.3)
    target = out_dir / 'entropy_hist.png'
    figure.savefig(target, dpi=120, bbox_inches='tight')
    plt.close(figure)
    return target


def plot_texture(directories: Sequence[Path], out_dir: Path) -> Path:
    figure, axis = plt.subplots(figsize=(7, 4))
    for directory in directories:
        rows = read_rows(directory / 'texture_kde.csv')
        axis.plot([float(row['x']) for row in rows], [float(row['density']) for row in rows], label=directory.name)
    axis.set_xlabel('texture richness (mean patch ldiv)')
    axis.set_ylabel('density')
    axis.legend()
    axis.grid(True, alpha=0.3)
    target = out_dir / 'texture_kde.png'
    figure.savefig(target, dpi=120, bbox_inches='tight')
    plt.close(figure)
    return target


def plot_directories(directories: Sequence[Path], out_dir: Path) -> List[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for directory in directories:
        for name in MAP_FILES:
            if (directory / name).exists():
                written.append(plot_map(directory / name, out_dir, directory.name))
        for pattern in MASK_PATTERNS:
            for path in sorted(directory.glob(pattern)):
                written.append(plot_mask(path, out_dir, directory.name))
    with_entropy = [directory for directory in directories if (directory / 'entropy_hist.csv').exists()]
    if with_entropy:
        written.append(plot_entropy(with_entropy, out_dir))
    with_texture = [directory for directory in directories if (directory / 'texture_kde.csv').exists()]
    if with_texture:
        written.append(plot_texture(with_texture, out_dir))
    return written


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(description='Plot the CSV outputs of the diagnostic commands')
    parser.add_argument('directories', nargs='+', help='Directories holding diagnostic CSVs')
    parser.add_argument('-o', '--out', default='figures', help='Figure directory (default: figures)')
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format='%(levelname)s %(message)s')
    directories = [Path(directory) for directory in args.directories]
    for directory in directories:
        if not directory.is_dir():
            print(f'Error: Directory "{directory}" does not exist!', file=sys.stderr)
            return 1
    written = plot_directories(directories, Path(args.out))
    if not written:
        print('Error: No diagnostic CSV files found.', file=sys.stderr)
        return 1
    for path in written:
        logger.info('figure %s', path)
    return 0


if __name__ == '__main__':
    sys.exit(main())
