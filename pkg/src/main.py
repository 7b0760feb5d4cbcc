import logging
import sys
from typing import Callable

import click

from config.settings import settings
from src.cli import commands
from src.exceptions import ConfigError

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.log_level.upper()),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


class DinsysGroup(click.Group):
    """Click group mapping usage errors to exit code 64"""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
        except click.UsageError as e:
            e.show()
            sys.exit(commands.EXIT_USAGE)
        except click.ClickException as e:
            e.show()
            sys.exit(e.exit_code)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(1)
        sys.exit(rv if isinstance(rv, int) else 0)


def _dispatch(handler: Callable[..., int], config_path: str, **kwargs) -> int:
    try:
        config = commands.parse_config(config_path)
        return handler(config, **kwargs)
    except ConfigError as e:
        logger.error(f"invalid configuration: {e}")
        click.echo(f"error: {e}", err=True)
        return commands.EXIT_USAGE


@click.group(cls=DinsysGroup)
def cli():
    """Semi-implicit variational solver for damped inertial systems"""


@cli.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--out", default=None, help="Output directory (overrides output.directory)")
@click.option("--strict", is_flag=True, help="Count warnings as failed checks")
def run(config_path, out, strict):
    """Run one trajectory with its energy-dissipation and a-priori checks"""
    return _dispatch(commands.cmd_run, config_path, out=out, strict=strict)


@cli.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--jobs", type=click.IntRange(min=1), default=None, help="Worker processes")
@click.option("--out", default=None, help="Output directory (overrides output.directory)")
@click.option("--strict", is_flag=True, help="Count warnings as failed checks")
def sweep(config_path, jobs, out, strict):
    """Convergence study over the sweep step sizes"""
    return _dispatch(commands.cmd_sweep, config_path, out=out, jobs=jobs, strict=strict)


@cli.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--out", default=None, help="Output directory (overrides output.directory)")
@click.option("--strict", is_flag=True, help="Count warnings as failed checks")
def audit(config_path, out, strict):
    """Sample the structural assumptions of the configured system"""
    return _dispatch(commands.cmd_audit, config_path, out=out, strict=strict)


if __name__ == "__main__":
    cli()
