from datetime import datetime

from flask_sqlalchemy import SQLAlchemy

db = SQLAlchemy()


class ExperimentRun(db.Model):
    __tablename__ = 'experiment_runs'

    id = db.Column(db.Integer, primary_key=True)
    command = db.Column(db.String(50), nullable=False)
    config_hash = db.Column(db.String(64), nullable=False)
    artifact_version = db.Column(db.String(20), nullable=False)
    seed = db.Column(db.String(20), nullable=True)  # uint64 não cabe em BigInteger

    # Status
    status = db.Column(db.String(20), default='running')  # running, success, failed
    exit_code = db.Column(db.Integer, nullable=True)
    error_message = db.Column(db.Text, nullable=True)

    # Resultados
    outputs = db.Column(db.JSON, nullable=True)
    summary = db.Column(db.JSON, nullable=True)

    created_at = db.Column(db.DateTime, default=datetime.utcnow)
    finished_at = db.Column(db.DateTime, nullable=True)

    def __repr__(self):
        return f'<ExperimentRun {self.id} {self.command}>'

    def to_dict(self):
        return {
            'id': self.id,
            'command': self.command,
            'config_hash': self.config_hash,
            'artifact_version': self.artifact_version,
            'seed': self.seed,
            'status': self.status,
            'exit_code': self.exit_code,
            'error_message': self.error_message,
            'outputs': self.outputs or [],
            'summary': self.summary or {},
            'created_at': self.created_at.isoformat() if self.created_at else None,
            'finished_at': self.finished_at.isoformat() if self.finished_at else None
        }
