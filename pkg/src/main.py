import logging
import os
import sys
# DON'T CHANGE THIS !!!
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from flask import Flask
from flask_cors import CORS
from src.models.config import env_database_url, env_log_level
from src.models.run import db
from src.routes.experiments import experiments_bp

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def create_app(database_url=None, output_root=None):
    app = Flask(__name__)

    # Habilitar CORS para todas as rotas
    CORS(app)

    # Registrar blueprints
    app.register_blueprint(experiments_bp, url_prefix='/api')

    # Configuração do banco de dados
    app.config['SQLALCHEMY_DATABASE_URI'] = database_url or env_database_url()
    app.config['SQLALCHEMY_TRACK_MODIFICATIONS'] = False
    app.config['OUTPUT_ROOT'] = output_root or os.environ.get(
        'NLSBNF_OUTPUT_ROOT', os.path.join(os.path.dirname(__file__), 'output'))
    db.init_app(app)

    os.makedirs(app.config['OUTPUT_ROOT'], exist_ok=True)
    if app.config['SQLALCHEMY_DATABASE_URI'].startswith('sqlite:///'):
        folder = os.path.dirname(app.config['SQLALCHEMY_DATABASE_URI'][len('sqlite:///'):])
        if folder:
            os.makedirs(folder, exist_ok=True)

    with app.app_context():
        db.create_all()

    return app


logging.basicConfig(level=env_log_level(), format=LOG_FORMAT)
app = create_app()


if __name__ == '__main__':
    port = int(os.environ.get('PORT', 5000))
    app.run(host='0.0.0.0', port=port, debug=False)
