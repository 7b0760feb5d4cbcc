import csv
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

from src.models.records import AprioriReport, AuditReport, ConvergenceTable, EdiReport, Trajectory

logger = logging.getLogger(__name__)

TRAJECTORY_HEADER = ["n", "t", "|V|_H", "||U||_V", "E", "Psi(V)", "PsiStar", "xi_residual", "inner_iters"]
EDI_HEADER = ["s", "t", "lhs", "rhs", "slack"]
APRIORI_HEADER = ["quantity", "value"]
CONVERGENCE_HEADER = ["tau", "err_CH", "err_L2V", "err_V_CH", "order_estimate"]


def _num(x: Optional[float]) -> str:
    """Shortest round-trip decimal form; empty for a missing value"""
    if x is None:
        return ""
    return repr(float(x))


class ReportWriter:
    """CSV and text reports of one run directory"""

    def __init__(self, directory: str):
        self.directory = Path(directory)

    def _open(self, name: str):
        self.directory.mkdir(parents=True, exist_ok=True)
        return open(self.directory / name, "w", newline="", encoding="utf-8")

    def _write_rows(self, name: str, header: Sequence[str], rows: Iterable[Sequence[str]]) -> Path:
        with self._open(name) as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        logger.info(f"wrote {self.directory / name}")
        return self.directory / name

    def write_trajectory(self, trajectory: Trajectory) -> Path:
        norms = trajectory.system.norms
        rows = (
            [str(r.n), _num(r.t), _num(norms.norm("H", r.V)), _num(norms.norm("V", r.U)), _num(r.energy_value),
             _num(r.psi_value), _num(r.psi_star_value), _num(r.xi_residual), str(r.inner_iterations)]
            for r in trajectory.records
        )
        return self._write_rows("trajectory.csv", TRAJECTORY_HEADER, rows)

    def write_edi(self, report: EdiReport) -> Path:
        rows = ([_num(e.s), _num(e.t), _num(e.lhs), _num(e.rhs), _num(e.slack)] for e in report.entries)
        return self._write_rows("edi.csv", EDI_HEADER, rows)

    def write_apriori(self, report: AprioriReport, extra: Sequence = ()) -> Path:
        rows = [[name, _num(value)] for name, value in list(report.as_rows()) + list(extra)]
        return self._write_rows("apriori.csv", APRIORI_HEADER, rows)

    def write_convergence(self, table: ConvergenceTable) -> Path:
        rows = ([_num(r.tau), _num(r.err_CH), _num(r.err_L2V), _num(r.err_V_CH), _num(r.order_estimate)]
                for r in table.rows)
        return self._write_rows("convergence.csv", CONVERGENCE_HEADER, rows)

    def write_audit(self, lines: List[str], audit: Optional[AuditReport] = None,
                    edi: Optional[EdiReport] = None) -> Path:
        """Human-readable summary: warnings, check outcomes and audit constants"""
        out = list(lines)
        if edi is not None:
            out.append(f"edi: {'pass' if edi.passed else 'FAIL'} min_slack={_num(edi.min_slack)} "
                       f"min_slack_half_lambda={_num(edi.min_slack_half_lambda)} tolerance={_num(edi.tolerance)}")
        if audit is not None:
            out.append(f"audit samples: {audit.samples}")
            for entry in audit.entries:
                threshold = "-" if entry.threshold is None else _num(entry.threshold)
                out.append(f"{entry.name}: measured={_num(entry.measured)} threshold={threshold} "
                           f"{'pass' if entry.passed else 'FAIL'} ({entry.detail})")
            for key, value in audit.extras.items():
                out.append(f"{key}: {_num(value)}")
        with self._open("audit.txt") as fh:
            fh.write("\n".join(out) + "\n")
        logger.info(f"wrote {self.directory / 'audit.txt'}")
        return self.directory / "audit.txt"
