"""Execução dos comandos de experimento e registro no ledger de execuções"""
import logging
import os
from datetime import datetime
from enum import Enum
from typing import Callable, Dict, List, Optional

import numpy as np
from flask import has_app_context

from src import ARTIFACT_VERSION
from src.models.config import ExperimentConfig, NormalFormSection, env_threads
from src.models.errors import NLSBirkhoffError, ValidationError
from src.models.run import ExperimentRun, db
from src.services.birkhoff import (NormalFormResult, apply_tau0, manual_plan, normal_form, plan_parameters,
                                   residual_ladder, tau_growth, new_variable_rate)
from src.services.lattice import FourierState, TruncatedLattice, nns_observable, random_state
from src.services.lieflow import FlowConfig
from src.services.polyalg import maintech_ratio, nls_nonlinearity
from src.services.potential import BlockPotential, frequencies, sample_potential
from src.services.resonance import (gamma_empirical, gamma_from_records, gamma_polynomial_empirical,
                                    mc_linear_scaling, scan)
from src.services.serialization import (build_meta, load_potential, read_snapshot, to_jsonable, write_csv,
                                        write_json, write_jsonl, write_snapshot)
from src.services.simulator import SimConfig, simulate, simulate_ensemble
from src.services.verification import run_suites

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_PROPERTY = 3


class Command(Enum):
    SAMPLE_POTENTIAL = "sample-potential"
    SMALLDIV_SCAN = "smalldiv-scan"
    NORMAL_FORM = "normal-form"
    SIMULATE = "simulate"
    VERIFY = "verify"


class ExperimentRunner:
    """Executa comandos a partir de uma ExperimentConfig e devolve dicts de resultado"""

    def __init__(self):
        self.handlers: Dict[Command, Callable[[ExperimentConfig, str, Dict], Dict]] = {
            Command.SAMPLE_POTENTIAL: self.cmd_sample_potential,
            Command.SMALLDIV_SCAN: self.cmd_smalldiv_scan,
            Command.NORMAL_FORM: self.cmd_normal_form,
            Command.SIMULATE: self.cmd_simulate,
            Command.VERIFY: self.cmd_verify,
        }

    def run(self, command: str, config: ExperimentConfig, output_root: Optional[str] = None) -> Dict:
        try:
            cmd = Command(command)
        except ValueError:
            return {
                'success': False,
                'error': f'Comando desconhecido: {command}',
                'valid_commands': [c.value for c in Command],
                'exit_code': EXIT_VALIDATION
            }

        run = self._open_run(cmd, config)
        logger.info("Comando %s iniciado (config %s)", cmd.value, config.config_hash[:12])
        try:
            out_dir = config.output_path(output_root)
            meta = build_meta(config.config_hash, cmd.value)
            config = config.confined(output_root)
            result = self.handlers[cmd](config, out_dir, meta)
            exit_code = result.pop('exit_code', EXIT_OK)
            response = {'success': exit_code == EXIT_OK, 'exit_code': exit_code, **to_jsonable(result)}
            if exit_code == EXIT_PROPERTY:
                response['error'] = 'Suíte de propriedades falhou'
        except ValidationError as e:
            response = {'success': False, 'error': str(e), 'exit_code': EXIT_VALIDATION}
        except NLSBirkhoffError as e:
            response = {'success': False, 'error': str(e), 'exit_code': EXIT_RUNTIME}
        except Exception as e:
            logger.exception("Falha inesperada no comando %s", cmd.value)
            response = {'success': False, 'error': str(e), 'exit_code': EXIT_RUNTIME}

        if response['exit_code'] != EXIT_OK:
            logger.error("Comando %s abortado (código %d): %s", cmd.value, response['exit_code'],
                         response.get('error'))
        else:
            logger.info("Comando %s concluído", cmd.value)
        self._close_run(run, response)
        if run is not None:
            response['run_id'] = run.id
        return response

    def _open_run(self, cmd: Command, config: ExperimentConfig) -> Optional[ExperimentRun]:
        if not has_app_context():
            return None
        run = ExperimentRun(
            command=cmd.value,
            config_hash=config.config_hash,
            artifact_version=ARTIFACT_VERSION,
            seed=str(config.seed),
            status='running'
        )
        db.session.add(run)
        db.session.commit()
        return run

    def _close_run(self, run: Optional[ExperimentRun], response: Dict):
        if run is None:
            return
        try:
            run.status = 'success' if response['success'] else 'failed'
            run.exit_code = response['exit_code']
            run.outputs = response.get('outputs', [])
            run.summary = response.get('summary', {})
            run.error_message = response.get('error')
            run.finished_at = datetime.utcnow()
            db.session.commit()
        except Exception as e:
            db.session.rollback()
            logger.error("Não foi possível registrar a execução %s: %s", run.id, e)

    # Entradas comuns

    def _potential(self, config: ExperimentConfig, path: Optional[str], lattice: TruncatedLattice,
                   seed: Optional[int] = None) -> BlockPotential:
        if path:
            potential = load_potential(path)
        else:
            n_max = max(config.potential.n_max, lattice.n_max)
            potential = sample_potential(config.seed if seed is None else seed, n_max)
        if potential.n_max < lattice.n_max:
            raise ValidationError(
                f"Potencial com n_max={potential.n_max} não cobre a caixa (n_max={lattice.n_max})")
        return potential

    def cmd_sample_potential(self, config: ExperimentConfig, out_dir: str, meta: Dict) -> Dict:
        potential = sample_potential(config.seed, config.potential.n_max)
        path = write_json(os.path.join(out_dir, 'potential.json'), potential.to_dict(), meta)
        return {'outputs': [path], 'summary': potential.to_dict()}

    def cmd_smalldiv_scan(self, config: ExperimentConfig, out_dir: str, meta: Dict) -> Dict:
        section = config.scan
        lattice = TruncatedLattice(section.d, section.k_max)
        potential = self._potential(config, section.potential_file, lattice)
        records = scan(potential, lattice, section.q_max)
        gamma = gamma_from_records(records)
        summary = {
            'lattice': lattice.to_dict(),
            'q_max': section.q_max,
            'pairs': len(records),
            'removal_pairs': sum(1 for r in records if r.removal),
            'gamma_emp': gamma,
            'gamma_polynomial': gamma_polynomial_empirical(potential, lattice, section.q_max, section.alpha),
            'alpha': section.alpha,
            'potential': potential.to_dict(),
        }
        if section.monte_carlo is not None:
            mc = section.monte_carlo
            summary['monte_carlo'] = mc_linear_scaling(mc.gammas, mc.q, mc.n_max, mc.trials,
                                                       seed=config.seed, d=section.d)
        rows = [list(r.to_row().values()) for r in records]
        columns = ['q', 'k', 'l', 'removal', 'abs_omega', 'gamma_contribution']
        csv_path = write_csv(os.path.join(out_dir, 'smalldiv_scan.csv'), columns, rows, meta)
        json_path = write_json(os.path.join(out_dir, 'smalldiv_summary.json'), summary, meta)
        brief = {key: summary[key] for key in ('pairs', 'removal_pairs', 'gamma_emp')}
        return {'outputs': [csv_path, json_path], 'summary': brief}

    def _build_normal_form(self, config: ExperimentConfig, section: NormalFormSection,
                           lattice: TruncatedLattice, potential: BlockPotential) -> NormalFormResult:
        omega = frequencies(potential, lattice)
        P = nls_nonlinearity(lattice, section.p, section.sigma, cap=section.coeff_cap)
        if section.r is not None:
            plan = manual_plan(section.r, section.nu, d=section.d, p=section.p, sigma=section.sigma, C=section.C)
        else:
            gamma = section.gamma if section.gamma is not None else gamma_empirical(potential, lattice, 2)
            plan = plan_parameters(section.eps, section.s0, section.d, p=section.p, gamma_emp=gamma,
                                   sigma=section.sigma, C=section.C)
        return normal_form(omega, P, plan, cap=section.coeff_cap, flow_cfg=FlowConfig(dt=section.flow_dt))

    def cmd_normal_form(self, config: ExperimentConfig, out_dir: str, meta: Dict) -> Dict:
        section = config.normal_form
        if section is None:
            raise ValidationError("Seção normal_form ausente na configuração")
        lattice = TruncatedLattice(section.d, section.k_max)
        potential = self._potential(config, section.potential_file, lattice)
        result = self._build_normal_form(config, section, lattice, potential)
        payload = result.to_dict()
        summary = {
            'r': result.plan.r,
            'nu': result.plan.nu,
            'rho': result.plan.rho,
            'resonant': result.certificates['resonant'],
            'fitted_C': result.certificates['fitted_C'],
            'discarded_orders': result.discard_ledger.total_count,
        }
        if section.ladder is not None:
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(section.ladder.direction_seed)))
            direction = random_state(lattice, rng, decay=1.0)
            ladder = residual_ladder(result, direction, section.ladder.exponents, section.ladder.base)
            payload['residual_ladder'] = ladder
            sample = direction.scaled(result.plan.rho / 4)
            payload['tau_growth'] = tau_growth(result, sample, s=1.0)
            payload['commutator_ratios'] = self._commutator_sweep(result, sample, section)
            summary['residual_slope'] = ladder['slope']
        json_path = write_json(os.path.join(out_dir, 'normal_form.json'), payload, meta)
        lines = []
        for L in result.resonant_parts:
            lines.extend(dict(record, part='L') for record in L.to_records())
        for chi, stage in result.generators:
            lines.extend(dict(record, part='chi', stage=stage) for record in chi.to_records())
        jsonl_path = write_jsonl(os.path.join(out_dir, 'normal_form_polys.jsonl'), lines, meta)
        return {'outputs': [json_path, jsonl_path], 'summary': summary}

    def _commutator_sweep(self, result: NormalFormResult, u: FourierState, section: NormalFormSection) -> Dict:
        """|{N_{N,s}, L}(u)| normalizado, para N = 2, 4, ... dentro da caixa"""
        eta = result.plan.eta if result.plan.eta is not None else min(1.0, (section.s0 - section.d / 2) / 2)
        ratios = {}
        N = 2
        while N <= section.k_max:
            values = [maintech_ratio(L, u, N, section.s0, eta) for L in result.resonant_parts]
            ratios[str(N)] = max(values, default=0.0)
            N *= 2
        return {'s': section.s0, 'eta': eta, 'by_N': ratios, 'fitted_C_s': max(ratios.values(), default=0.0)}

    def cmd_simulate(self, config: ExperimentConfig, out_dir: str, meta: Dict) -> Dict:
        section = config.simulate
        lattice = TruncatedLattice(section.d, section.k_max)
        workers = env_threads()
        initial = section.initial
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(
            config.seed if initial.seed is None else initial.seed)))
        u0 = random_state(lattice, rng, amplitude=initial.amplitude, decay=initial.decay, norm=initial.norm)

        def sim_config(potential: BlockPotential) -> SimConfig:
            return SimConfig(lattice=lattice, potential=potential, p=section.p, sigma=section.sigma,
                             dt=section.dt, t_final=section.t_final, record_every=section.record_every,
                             dealias=section.dealias, nonlinear_scheme=section.nonlinear_scheme,
                             s_list=section.s_list, nns_s=section.nns_s, nns_N=section.nns_N, workers=workers)

        if section.ensemble is not None and section.ensemble.seeds:
            return self._simulate_ensemble(config, section.ensemble.seeds, lattice, u0, sim_config,
                                           workers, out_dir, meta)

        potential = self._potential(config, section.potential_file, lattice)
        cfg = sim_config(potential)
        start_step = 0
        if section.resume_from:
            u0, start_step, _ = read_snapshot(section.resume_from)
            if u0.lattice != lattice:
                raise ValidationError("Snapshot em caixa diferente da configuração")
        outputs: List[str] = []

        def sink(step: int, time: float, u: FourierState):
            outputs.append(write_snapshot(os.path.join(out_dir, f'snapshot_{step:010d}.bin'), u, step, time))

        record = simulate(u0, cfg, start_step=start_step, snapshot_every=section.snapshot_every,
                          snapshot_sink=sink if section.snapshot_every else None)
        csv_path = write_csv(os.path.join(out_dir, 'trajectory.csv'), record.columns(), record.rows(), meta)
        summary = record.drift_report(section.nns_s)
        if section.normal_form_check is not None:
            summary['new_variables'] = self._new_variable_check(config, section, lattice, potential, u0, cfg)
        json_path = write_json(os.path.join(out_dir, 'simulate_summary.json'), summary, meta)
        return {'outputs': outputs + [csv_path, json_path], 'summary': summary}

    def _simulate_ensemble(self, config: ExperimentConfig, seeds, lattice: TruncatedLattice, u0: FourierState,
                           sim_config, workers: int, out_dir: str, meta: Dict) -> Dict:
        section = config.simulate
        cfgs = [sim_config(self._potential(config, None, lattice, seed=seed)) for seed in seeds]
        records = simulate_ensemble([u0] * len(cfgs), cfgs, workers=workers)
        rows, reports = [], []
        for seed, record in zip(seeds, records):
            report = record.drift_report(section.nns_s)
            reports.append(dict(report, seed=seed))
            rows.append([seed, report['max_rel_drift_J'], report['max_rel_drift_mass'],
                         int(bool(report['ns_equivalence'])), report['samples']])
        columns = ['seed', 'max_rel_drift_J', 'max_rel_drift_mass', 'ns_equivalence', 'samples']
        csv_path = write_csv(os.path.join(out_dir, 'drift_report.csv'), columns, rows, meta)
        summary = {
            'seeds': list(seeds),
            'max_rel_drift_J': max(r['max_rel_drift_J'] for r in reports),
            'max_rel_drift_mass': max(r['max_rel_drift_mass'] for r in reports),
            'ns_equivalence': all(bool(r['ns_equivalence']) for r in reports),
            'members': reports,
        }
        json_path = write_json(os.path.join(out_dir, 'drift_summary.json'), summary, meta)
        return {'outputs': [csv_path, json_path], 'summary': {k: v for k, v in summary.items() if k != 'members'}}

    def _new_variable_check(self, config: ExperimentConfig, section, lattice: TruncatedLattice,
                            potential: BlockPotential, u0: FourierState, cfg: SimConfig) -> Dict:
        """Compara d/dt N_{N,s}(tau0(u(t))) por diferenças finitas com a taxa prevista"""
        nf_section = section.normal_form_check
        if (nf_section.d, nf_section.k_max) != (lattice.d, lattice.k_max):
            raise ValidationError("normal_form_check deve usar a mesma caixa da simulação")
        result = self._build_normal_form(config, nf_section, lattice, potential)
        N = section.nns_N or 2 ** lattice.n_max
        states: List[FourierState] = []
        simulate(u0, cfg, snapshot_every=1, snapshot_sink=lambda step, time, u: states.append(u))
        states.insert(0, u0)
        values = [nns_observable(apply_tau0(result, u, strict=False), section.nns_s, N) for u in states]
        errors, rates = [], []
        for i in range(1, len(states) - 1):
            numeric = (values[i + 1] - values[i - 1]) / (2 * cfg.dt)
            predicted = new_variable_rate(result, apply_tau0(result, states[i], strict=False), N, section.nns_s)
            errors.append(abs(numeric - predicted))
            rates.append(abs(predicted))
        return {
            'N': N,
            'samples': len(errors),
            'max_abs_error': max(errors, default=0.0),
            'max_predicted_rate': max(rates, default=0.0),
        }

    def cmd_verify(self, config: ExperimentConfig, out_dir: str, meta: Dict) -> Dict:
        section = config.verify
        results = run_suites(section.examples, section.seed, section.inject, section.suites)
        failed = [r for r in results if not r.passed]
        payload = {'checks': [r.to_dict() for r in results], 'failed': len(failed)}
        path = write_json(os.path.join(out_dir, 'verify.json'), payload, meta)
        return {
            'outputs': [path],
            'summary': {'checks': len(results), 'failed': [f'{r.suite}.{r.name}' for r in failed]},
            'exit_code': EXIT_PROPERTY if failed else EXIT_OK
        }


# Instância global do executor
experiment_runner = ExperimentRunner()
