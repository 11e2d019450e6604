"""
Main CLI module for hypmoce.

Every command prints its result on stdout (JSON by default) and logs on
stderr. Library errors map to exit codes: 2 for invalid input, 3 for an
unsupported format version, 4 when a solver fails to converge and 1 for
anything else.
"""

import logging
import os
import sys

import click
from dotenv import load_dotenv

from . import __version__
from .config import Config, load_run_config, load_synthetic_spec
from .errors import DimensionError, HypMoceError

logger = logging.getLogger(__name__)

OUTPUT_FORMATS = ['json', 'table']


def _fail(error: Exception) -> None:
    """Report ``error`` on stderr and exit with its code."""
    code = error.exit_code if isinstance(error, HypMoceError) else 1
    click.echo(click.style(f"Error: {error}", fg='red'), err=True)
    if os.getenv('DEBUG') == 'True':
        import traceback
        click.echo(traceback.format_exc(), err=True)
    sys.exit(code)


def _config() -> Config:
    config = Config()
    config.configure_torch()
    return config


def _emit(data, output: str, table_formatter) -> None:
    from .formatters import format_json

    if output == 'table':
        click.echo(table_formatter(data))
    else:
        click.echo(format_json(data))


@click.group()
@click.version_option(version=__version__)
@click.option('--debug', is_flag=True, help='Enable debug mode')
def cli(debug):
    """hypmoce - hyperbolic mixture-of-curvature experts for multimodal data."""
    load_dotenv()

    if debug or os.getenv('DEBUG', 'False').lower() == 'true':
        os.environ['DEBUG'] = 'True'
        level = logging.DEBUG
    else:
        level = getattr(logging, os.getenv('HYPMOCE_LOG_LEVEL', 'INFO').upper(), logging.INFO)
    logging.basicConfig(stream=sys.stderr, level=level, format='%(levelname)s %(name)s: %(message)s')


@cli.command()
@click.option('--spec', 'spec_path', required=True, type=click.Path(dir_okay=False), help='Synthetic dataset spec (JSON)')
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False), help='Dataset directory to write')
@click.option('--output', '-o', type=click.Choice(OUTPUT_FORMATS), default='json', help='Output format')
def gen(spec_path, out_dir, output):
    """Generate a synthetic hierarchical multimodal dataset."""
    from .formatters import format_manifest_table
    from .synth import generate, save_dataset

    try:
        spec = load_synthetic_spec(spec_path)
        manifest = save_dataset(generate(spec), out_dir)
        _emit(manifest, output, format_manifest_table)
    except Exception as e:
        _fail(e)


@cli.command()
@click.option('--input', 'input_path', required=True, type=click.Path(dir_okay=False), help='Point cloud or distance matrix (CSV)')
@click.option('--batch-size', default=400, show_default=True, help='Points per sampled batch')
@click.option('--batches', default=10, show_default=True, help='Number of sampled batches')
@click.option('--seed', default=0, show_default=True, help='Sampler seed')
@click.option('--metric', type=click.Choice(['euclidean', 'precomputed']), default='euclidean',
              show_default=True, help='How to read the CSV rows')
@click.option('--output', '-o', type=click.Choice(OUTPUT_FORMATS), default='json', help='Output format')
def delta(input_path, batch_size, batches, seed, metric, output):
    """Measure the Gromov δ-hyperbolicity of a point cloud."""
    from .formatters import format_delta_table
    from .hyperbolicity import delta_rel_sampled, load_cloud

    try:
        _config()
        cloud = load_cloud(input_path, metric)
        report = delta_rel_sampled(cloud, batch_size=batch_size, n_batches=batches, seed=seed)
        _emit(report.to_dict(), output, format_delta_table)
    except Exception as e:
        _fail(e)


@cli.command()
@click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False), help='Run configuration (JSON)')
@click.option('--out', 'out_dir', type=click.Path(file_okay=False), help='Run directory (default: HYPMOCE_OUTPUT_DIR)')
@click.option('--output', '-o', type=click.Choice(OUTPUT_FORMATS), default='json', help='Output format')
def train(config_path, out_dir, output):
    """Train with grouped cross-validation and write checkpoints and metrics."""
    from .formatters import format_summary_table
    from .pipeline import run_cross_validation, write_outputs
    from .synth import load_data

    try:
        config = _config()
        run = load_run_config(config_path)
        dataset = load_data(run.data)
        result = run_cross_validation(dataset, run, debug_checks=config.check_manifold)
        summary = write_outputs(result, out_dir or config.output_dir)
        _emit(summary, output, format_summary_table)
    except Exception as e:
        _fail(e)


@cli.command(name='eval')
@click.option('--checkpoint', 'checkpoint_path', required=True, type=click.Path(dir_okay=False), help='Checkpoint file')
@click.option('--data', 'data_dir', required=True, type=click.Path(file_okay=False), help='Dataset directory')
@click.option('--groups', help='Comma-separated subject ids to evaluate on (default: all)')
@click.option('--output', '-o', type=click.Choice(OUTPUT_FORMATS), default='json', help='Output format')
def evaluate(checkpoint_path, data_dir, groups, output):
    """Evaluate a checkpoint on a dataset."""
    from .formatters import format_metrics_table
    from .model import load_checkpoint
    from .synth import load_dataset
    from .training import evaluate as evaluate_model

    try:
        config = _config()
        model, _ = load_checkpoint(checkpoint_path, debug_checks=config.check_manifold)
        dataset = load_dataset(data_dir)
        for m in model.modalities:
            if m not in dataset.input_dims:
                raise DimensionError(f"checkpoint modality {m!r} is missing from the dataset")
            if dataset.input_dims[m] != model.input_dims[m]:
                raise DimensionError(
                    f"modality {m!r}: checkpoint expects {model.input_dims[m]} features, "
                    f"dataset has {dataset.input_dims[m]}"
                )
        if dataset.classes != model.classes:
            raise DimensionError(f"checkpoint has {model.classes} classes, dataset has {dataset.classes}")

        if groups:
            try:
                selected = [int(g) for g in groups.split(',')]
            except ValueError:
                raise click.BadParameter(f"expected comma-separated integers, got {groups!r}", param_hint='--groups')
            indices = dataset.indices_for(selected)
        else:
            indices = dataset.indices_for(dataset.group_ids())
        metrics = evaluate_model(model, dataset, indices)
        _emit(metrics.to_dict(), output, format_metrics_table)
    except click.BadParameter:
        raise
    except Exception as e:
        _fail(e)


@cli.command()
@click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False), help='Run configuration (JSON)')
@click.option('--out', 'out_dir', type=click.Path(file_okay=False), help='Directory for ablation.json')
@click.option('--seeds', default='0,1,2,3,4', show_default=True, help='Comma-separated run seeds')
@click.option('--variants', default='full,hyperbolic_experts_only,hyperbolic_fusion_only,euclidean',
              show_default=True, help='Comma-separated model variants')
@click.option('--output', '-o', type=click.Choice(OUTPUT_FORMATS), default='json', help='Output format')
def ablate(config_path, out_dir, seeds, variants, output):
    """Compare model variants over several seeds."""
    from .experiments import run_ablation
    from .formatters import format_ablation_table, format_json
    from .synth import load_data

    try:
        seed_list = [int(s) for s in seeds.split(',') if s.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {seeds!r}", param_hint='--seeds')

    try:
        config = _config()
        run = load_run_config(config_path)
        variant_list = [v.strip() for v in variants.split(',') if v.strip()]
        dataset = load_data(run.data)
        report = run_ablation(dataset, run, seed_list, variant_list, debug_checks=config.check_manifold)

        target = out_dir or config.output_dir
        os.makedirs(target, exist_ok=True)
        with open(os.path.join(target, 'ablation.json'), 'w', encoding='utf-8', newline='\n') as f:
            f.write(format_json(report))
            f.write("\n")
        _emit(report, output, format_ablation_table)
    except Exception as e:
        _fail(e)
