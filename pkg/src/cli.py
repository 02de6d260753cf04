"""Linha de comando: um subcomando por experimento, cada um com --config"""
import json
import logging
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

import click

from src.models.config import load_config, env_log_level
from src.models.errors import ConfigError
from src.services.experiment_runner import EXIT_VALIDATION, Command, experiment_runner

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def _run(ctx: click.Context, command: Command, config_path: str, output_root):
    try:
        config = load_config(config_path)
    except ConfigError as e:
        click.echo(f"Configuração inválida: {e}", err=True)
        ctx.exit(EXIT_VALIDATION)
    result = experiment_runner.run(command.value, config, output_root=output_root)
    click.echo(json.dumps({key: result[key] for key in ('success', 'exit_code', 'outputs', 'error')
                           if key in result}, sort_keys=True))
    ctx.exit(result['exit_code'])


def _experiment(command: Command, help_text: str):
    @click.command(name=command.value, help=help_text)
    @click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False),
                  help='Arquivo JSON de configuração')
    @click.option('--output-root', default=None, type=click.Path(file_okay=False),
                  help='Raiz onde output_dir é resolvido')
    @click.pass_context
    def handler(ctx, config_path, output_root):
        _run(ctx, command, config_path, output_root)
    return handler


@click.group()
@click.option('--log-level', default=None, help='Sobrescreve LOG_LEVEL')
def cli(log_level):
    """Forma normal de Birkhoff e simulação para NLS com potencial em blocos"""
    logging.basicConfig(level=(log_level or env_log_level()).upper(), format=LOG_FORMAT)


cli.add_command(_experiment(Command.SAMPLE_POTENTIAL, 'Amostra o potencial em blocos a partir da semente'))
cli.add_command(_experiment(Command.SMALLDIV_SCAN, 'Varre pequenos divisores e estima gamma'))
cli.add_command(_experiment(Command.NORMAL_FORM, 'Constrói a forma normal e mede o resíduo'))
cli.add_command(_experiment(Command.SIMULATE, 'Integra a NLS e registra observáveis'))
cli.add_command(_experiment(Command.VERIFY, 'Executa as suítes de propriedades'))


if __name__ == '__main__':
    cli()
