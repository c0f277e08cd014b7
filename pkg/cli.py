# --------------------------------------------------------
# 🚀 cli.py — command-line entry point
# --------------------------------------------------------
import os
import sys
from typing import List, Optional

import click

import settings
from config import ConfigError, parse_config
from experiments import (Workspace, lattice, run_content_study, run_luminance_study,
                         run_occlusion_study, run_resolution_study, run_table1, run_table2,
                         sample_cost_landscape)
from geometry import Intrinsics
from image_utils import export_smm, load_image, save_grid_csv
from scene import EmptyRenderError
from servo import DegenerateViewError, ServoStatus, run_servo
from settings import console
from smm import SmmConfig, smm_of_image
from trace_store import write_case_artifacts

APP_VERSION = "0.4.0"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _workspace(texture: Optional[str]) -> Workspace:
    return Workspace(texture=texture) if texture else Workspace()


def _report_exit(report) -> int:
    return EXIT_FAILED if report.failed else EXIT_OK


# --------------------------------------------------------
# 🧭 Command group
# --------------------------------------------------------
@click.group()
@click.version_option(APP_VERSION, prog_name="smm-servo")
@click.option("--quiet", is_flag=True, help="Silence progress output on stderr.")
def cli(quiet: bool):
    """Visual servoing on Student's t mixture model image features."""
    settings.quiet(quiet)


def experiment_options(default_dir: str):
    def decorate(fn):
        fn = click.option("--workers", type=click.IntRange(min=1), default=None,
                          help="Cases run in parallel (default: SMM_SERVO_THREADS / auto).")(fn)
        fn = click.option("--texture", default=None,
                          help="Built-in texture name or image path (default: blobs).")(fn)
        fn = click.option("--output-dir", default=default_dir, show_default=True,
                          type=click.Path(file_okay=False))(fn)
        return fn
    return decorate


# --------------------------------------------------------
# ▶️ Single run
# --------------------------------------------------------
@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--output-dir", default=None, type=click.Path(file_okay=False),
              help="Overrides output_dir from the config.")
def run(config_path: str, output_dir: Optional[str]):
    """One servo run described by a config file."""
    cfg = parse_config(config_path)
    out = output_dir or cfg.output_dir
    try:
        trace = run_servo(cfg.build_scene(), cfg.initial.pose(), cfg.desired.pose(), cfg.intrinsics(),
                          cfg.smm, cfg.controller, occlusion=cfg.occlusion_patch(),
                          luminance=cfg.luminance())
    except (DegenerateViewError, EmptyRenderError) as exc:
        console.print(f"❌ {exc}")
        return EXIT_FAILED

    paths = write_case_artifacts(trace, out)
    console.print(f"📝 Trace written: {paths['trace']}")
    return EXIT_FAILED if trace.status is ServoStatus.DIVERGED else EXIT_OK


# --------------------------------------------------------
# 🧪 Studies
# --------------------------------------------------------
@cli.command()
@experiment_options("results/table1")
def table1(output_dir: str, texture: Optional[str], workers: Optional[int]):
    """Planar (vx, vy, wz) positioning cases."""
    return _report_exit(run_table1(_workspace(texture), output_dir, workers))


@cli.command()
@experiment_options("results/table2")
def table2(output_dir: str, texture: Optional[str], workers: Optional[int]):
    """6-DOF positioning cases."""
    return _report_exit(run_table2(_workspace(texture), output_dir, workers))


@cli.command()
@experiment_options("results/resolution")
def resolution(output_dir: str, texture: Optional[str], workers: Optional[int]):
    """Same start pose at 50x50 and 100x100."""
    return _report_exit(run_resolution_study(_workspace(texture), output_dir, workers=workers))


@cli.command()
@experiment_options("results/occlusion")
@click.option("--fraction", type=click.FloatRange(0, 1, min_open=True), default=0.15, show_default=True)
def occlusion(output_dir: str, texture: Optional[str], workers: Optional[int], fraction: float):
    """Occluded current views plus the clean control run."""
    return _report_exit(run_occlusion_study(_workspace(texture), output_dir, fraction, workers))


@cli.command()
@experiment_options("results/content")
@click.option("--textures", default="fine,blobs,low,constant", show_default=True,
              help="Comma-separated texture names or image paths.")
def content(output_dir: str, texture: Optional[str], workers: Optional[int], textures: str):
    """Same start pose over several scene textures."""
    names = [t.strip() for t in textures.split(",") if t.strip()]
    if len(names) < 2:
        raise click.BadParameter("give at least two textures", param_hint="--textures")
    return _report_exit(run_content_study(names, _workspace(texture), output_dir, workers))


@cli.command()
@experiment_options("results/luminance")
def luminance(output_dir: str, texture: Optional[str], workers: Optional[int]):
    """Current views under global luminance changes."""
    return _report_exit(run_luminance_study(_workspace(texture), output_dir, workers=workers))


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--output-dir", default=None, type=click.Path(file_okay=False))
@click.option("--workers", type=click.IntRange(min=1), default=None)
def landscape(config_path: str, output_dir: Optional[str], workers: Optional[int]):
    """Cost over a (tx, ty) lattice around the desired pose."""
    cfg = parse_config(config_path)
    offsets = lattice(cfg.landscape.extent, cfg.landscape.steps)
    values = sample_cost_landscape(cfg.build_scene(), cfg.desired.pose(), cfg.intrinsics(),
                                   offsets, offsets, cfg.smm, workers)
    path = save_grid_csv(values, os.path.join(output_dir or cfg.output_dir, "landscape.csv"))
    console.print(f"✅ Landscape written: {path}")
    return EXIT_OK


@cli.command("smm")
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
@click.option("--pgm", "pgm_path", default=None, type=click.Path(dir_okay=False),
              help="Also write a min-max scaled PGM of S.")
@click.option("--focal", type=click.FloatRange(min=0, min_open=True), default=1.0, show_default=True,
              help="Focal length in pixels; 1 keeps S a density over pixel coordinates.")
def smm_command(input_path: str, output_path: str, pgm_path: Optional[str], focal: float):
    """Standalone SMM transform of a grayscale image."""
    try:
        img = load_image(input_path)
    except (FileNotFoundError, ValueError) as exc:
        raise click.BadParameter(str(exc), param_hint="--input")
    K = Intrinsics.centered(img.width, img.height, focal)
    export_smm(smm_of_image(img, K, SmmConfig()), csv_path=output_path, pgm_path=pgm_path)
    console.print(f"✅ SMM of {img.width}x{img.height} image written: {output_path}")
    return EXIT_OK


# --------------------------------------------------------
# 🚪 Entry point
# --------------------------------------------------------
def main(argv: Optional[List[str]] = None) -> int:
    try:
        result = cli.main(args=argv, prog_name="smm-servo", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        console.print("❌ Aborted")
        return EXIT_FAILED
    except ConfigError as exc:
        console.print(f"❌ {exc}")
        return EXIT_CONFIG
    return result if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
