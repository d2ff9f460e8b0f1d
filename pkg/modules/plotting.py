"""
Plotting Module
Renders the sweep figure (SVG) and field snapshots (PNG).
"""

import logging
from pathlib import Path
from typing import Iterable

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from config import Config
from modules.fields import MagnetizationField
from modules.sweep import SweepTable


logger = logging.getLogger(__name__)

SNAPSHOT_MAX_WIDTH = 2048
SNAPSHOT_MIN_HEIGHT = 64


def plot_sweep_svg(table: SweepTable, path, d: float = 1.0, comments: Iterable[str] = ()) -> Path:
    """
    Plot E_min / (d t) against t/d, one curve per Q.

    Args:
        table: Sweep table
        path: Destination SVG path
        d: Exchange length used by the sweep
        comments: Lines stored in the SVG description

    Returns:
        Path written
    """
    path = Path(path)
    plt.rcParams['svg.hashsalt'] = Config.SVG_HASH_SALT

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    points = table.ok_points()
    for Q in sorted({p.Q for p in points}):
        series = sorted((p for p in points if p.Q == Q), key=lambda p: p.t_over_d)
        x = np.array([p.t_over_d for p in series])
        y = np.array([p.E_min / (d * d * p.t_over_d) for p in series])
        markers = ['s' if p.winner == 'bloch' else 'o' for p in series]
        line, = ax.plot(x, y, '-', label=f'Q = {Q:g}')
        for xi, yi, marker in zip(x, y, markers):
            ax.plot(xi, yi, marker, color=line.get_color())

    ax.set_xlabel('t/d')
    ax.set_ylabel('E / (d t)')
    ax.set_title('Specific wall energy (squares: Bloch, circles: Neel)')
    if points:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format='svg', metadata={'Date': None, 'Description': '\n'.join(comments)})
    plt.close(fig)
    logger.info(f"Wrote sweep figure to {path}")
    return path


def render_field_png(field: MagnetizationField, path, comments: Iterable[str] = ()) -> Path:
    """
    Color snapshot of a field: hue is the in-plane angle of (m1, m2), brightness drops with |m3|.

    Args:
        field: Field to render
        path: Destination PNG path
        comments: Lines stored in the Description text chunk

    Returns:
        Path written
    """
    path = Path(path)
    m = field.values
    angle = np.arctan2(m[:, :, 1], m[:, :, 0])
    hue = ((angle + np.pi) / (2.0 * np.pi) * 255.0).astype(np.uint8)
    sat = np.full(hue.shape, 255, dtype=np.uint8)
    val = (255.0 * (1.0 - 0.6 * np.abs(m[:, :, 2]))).astype(np.uint8)

    # row 0 of the image is the top face
    channels = [Image.fromarray(np.ascontiguousarray(c[::-1, :])) for c in (hue, sat, val)]
    image = Image.merge('HSV', channels).convert('RGB')

    width = min(field.grid.n1, SNAPSHOT_MAX_WIDTH)
    height = max(field.grid.n3, SNAPSHOT_MIN_HEIGHT)
    if (width, height) != image.size:
        image = image.resize((width, height), Image.Resampling.NEAREST)
    info = PngInfo()
    info.add_text('Description', '\n'.join(comments))
    image.save(path, format='PNG', pnginfo=info)
    logger.info(f"Wrote field snapshot to {path}")
    return path
