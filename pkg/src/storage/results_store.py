import json
import logging
import os
import tempfile
from datetime import datetime

from sqlalchemy import Float, Integer, String, create_engine, func, select
from sqlalchemy.orm import DeclarativeBase, Mapped, Session, mapped_column

logger = logging.getLogger(__name__)

TOOL_NAME = "uavsim"
TOOL_VERSION = "0.1.0"


class Base(DeclarativeBase):
    pass


class RunRecord(Base):
    __tablename__ = "runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    command: Mapped[str] = mapped_column(String(32))
    config: Mapped[str] = mapped_column(String(128))
    policy: Mapped[str] = mapped_column(String(32))
    seed: Mapped[int] = mapped_column(Integer)
    packet_loss: Mapped[float] = mapped_column(Float)
    f_events: Mapped[int] = mapped_column(Integer, default=0)
    g_events: Mapped[int] = mapped_column(Integer, default=0)
    csv_path: Mapped[str] = mapped_column(String(512), default="")
    created_date: Mapped[str] = mapped_column(String(32))

    def as_dict(self):
        return {
            "id": self.id,
            "command": self.command,
            "config": self.config,
            "policy": self.policy,
            "seed": self.seed,
            "packet_loss": self.packet_loss,
            "f_events": self.f_events,
            "g_events": self.g_events,
            "csv_path": self.csv_path,
            "created_date": self.created_date,
        }


def _write_atomic(path, text):
    """Write through a temp file in the same directory, then rename over `path`."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


class ResultsStore:
    """
    Output directory owner: CSV tables, JSONL traces and the run index database

    Args:
        out_dir: Directory receiving every file of a run
        db_name: SQLite file name inside out_dir
    """

    def __init__(self, out_dir="results", db_name="runs.db"):
        self.out_dir = out_dir
        self.db_file = os.path.join(out_dir, db_name)
        self.engine = None
        self.init_database()

    def init_database(self):
        os.makedirs(self.out_dir, exist_ok=True)
        self.engine = create_engine(f"sqlite:///{os.path.abspath(self.db_file)}")
        Base.metadata.create_all(self.engine)
        logger.debug("✅ Run index ready: %s", self.db_file)

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def write_csv_atomic(self, frame, name, **header):
        """
        Write a DataFrame as CSV behind a version/seed comment line

        Args:
            frame: pandas DataFrame
            name: File name inside the output directory
            **header: Extra key=value pairs for the comment line (seed, policy, ...)

        Returns:
            Path of the written file
        """
        fields = " ".join(f"{k}={v}" for k, v in header.items())
        comment = f"# {TOOL_NAME} {TOOL_VERSION} {fields}".rstrip() + "\n"
        body = frame.to_csv(index=False, lineterminator="\n")
        path = _write_atomic(self.path(name), comment + body)
        logger.info("💾 Wrote %s (%d rows)", path, len(frame))
        return path

    def write_trace(self, records, name):
        lines = [json.dumps(record, sort_keys=True) for record in records]
        path = _write_atomic(self.path(name), "\n".join(lines) + ("\n" if lines else ""))
        logger.info("💾 Wrote trace %s (%d records)", path, len(lines))
        return path

    def add_run(self, command, config, policy, seed, packet_loss, f_events=0, g_events=0, csv_path=""):
        """Register one episode row in the run index and return its id."""
        with Session(self.engine) as session:
            record = RunRecord(
                command=command,
                config=str(config),
                policy=policy,
                seed=int(seed),
                packet_loss=float(packet_loss),
                f_events=int(f_events),
                g_events=int(g_events),
                csv_path=csv_path,
                created_date=datetime.now().isoformat(),
            )
            session.add(record)
            session.commit()
            return record.id

    def add_runs(self, command, episodes, csv_path=""):
        """Register every row of an episode table."""
        ids = []
        for row in episodes.to_dict("records"):
            ids.append(self.add_run(
                command, row["config"], row["policy"], row["seed"], row["packet_loss"],
                row.get("f_events", 0), row.get("g_events", 0), csv_path,
            ))
        return ids

    def get_all_runs(self):
        with Session(self.engine) as session:
            return [r.as_dict() for r in session.scalars(select(RunRecord).order_by(RunRecord.id))]

    def get_run_stats(self):
        """Run count and mean packet loss per policy."""
        with Session(self.engine) as session:
            rows = session.execute(
                select(RunRecord.policy, func.count(RunRecord.id), func.avg(RunRecord.packet_loss))
                .group_by(RunRecord.policy)
                .order_by(RunRecord.policy)
            ).all()
        return {policy: {"runs": count, "mean_packet_loss": float(mean)} for policy, count, mean in rows}

    def export_report(self, output_file=None):
        output_file = output_file or self.path("report.json")
        report = {
            "generated_date": datetime.now().isoformat(),
            "statistics": self.get_run_stats(),
            "runs": self.get_all_runs(),
        }
        _write_atomic(output_file, json.dumps(report, indent=2, ensure_ascii=False))
        logger.info("✅ Report exported: %s", output_file)
        return output_file


# CLI Interface
if __name__ == "__main__":
    import sys

    print("=" * 80)
    print("📁 RUN INDEX")
    print("=" * 80)

    out_dir = sys.argv[2] if len(sys.argv) > 2 else "results"
    store = ResultsStore(out_dir)
    command = sys.argv[1] if len(sys.argv) > 1 else "stats"

    if command == "list":
        runs = store.get_all_runs()
        print(f"\n📂 Total runs: {len(runs)}\n")
        for run in runs[-10:]:
            print(f"  • #{run['id']} {run['command']} {run['config']}/{run['policy']} seed={run['seed']}")
            print(f"    Packet loss: {run['packet_loss']:.0f}")
    elif command == "stats":
        print("\n📊 RUN STATISTICS")
        for policy, stats in store.get_run_stats().items():
            print(f"  {policy}: {stats['runs']} runs, mean loss {stats['mean_packet_loss']:.2f}")
    elif command == "export":
        store.export_report()
    else:
        print("\nUsage:")
        print("  python results_store.py list [out_dir]    - List recent runs")
        print("  python results_store.py stats [out_dir]   - Mean loss per policy")
        print("  python results_store.py export [out_dir]  - Export report.json")
