from flask import Blueprint, current_app, jsonify, request

from src import ARTIFACT_VERSION
from src.models.config import env_threads, parse_config
from src.models.errors import ValidationError
from src.models.run import ExperimentRun, db
from src.services.experiment_runner import EXIT_OK, EXIT_PROPERTY, EXIT_VALIDATION, experiment_runner

experiments_bp = Blueprint('experiments', __name__)

STATUS_BY_EXIT = {EXIT_OK: 200, EXIT_VALIDATION: 400, EXIT_PROPERTY: 422}


@experiments_bp.route('/experiments/<command>', methods=['POST'])
def run_experiment(command):
    """Executa um comando de forma síncrona dentro de OUTPUT_ROOT"""
    try:
        data = request.get_json(silent=True)
        if data is None:
            return jsonify({
                'success': False,
                'error': 'Corpo JSON com a configuração é obrigatório'
            }), 400

        config = parse_config(data)
        result = experiment_runner.run(command, config, output_root=current_app.config['OUTPUT_ROOT'])
        return jsonify(result), STATUS_BY_EXIT.get(result['exit_code'], 500)

    except ValidationError as e:
        return jsonify({
            'success': False,
            'error': str(e)
        }), 400
    except Exception as e:
        current_app.logger.error("Erro ao executar %s: %s", command, e)
        return jsonify({
            'success': False,
            'error': str(e)
        }), 500


@experiments_bp.route('/runs', methods=['GET'])
def list_runs():
    """Lista as execuções mais recentes"""
    try:
        limit = int(request.args.get('limit', 50))
        runs = ExperimentRun.query.order_by(ExperimentRun.id.desc()).limit(limit).all()
        return jsonify({
            'success': True,
            'runs': [run.to_dict() for run in runs],
            'count': len(runs)
        })

    except ValueError:
        return jsonify({
            'success': False,
            'error': 'Parâmetro limit inválido'
        }), 400
    except Exception as e:
        return jsonify({
            'success': False,
            'error': str(e)
        }), 500


@experiments_bp.route('/runs/<int:run_id>', methods=['GET'])
def get_run(run_id):
    """Obtém uma execução específica"""
    run = db.session.get(ExperimentRun, run_id)
    if run is None:
        return jsonify({
            'success': False,
            'error': f'Execução {run_id} não encontrada'
        }), 404
    return jsonify({'success': True, 'run': run.to_dict()})


@experiments_bp.route('/health', methods=['GET'])
def health():
    return jsonify({
        'success': True,
        'version': ARTIFACT_VERSION,
        'threads': env_threads()
    })
