import os
from functools import lru_cache

from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker

from config import config_
from database.scheme import Artifact, Base, Run


"""
Run and artifact registry. Registry performs the CRUD operations on the registry database
and inherits from RegistryCache, which keeps the artifact table in memory (path -> sha256)
so hash lookups never hit the database. get_registry() returns the one instance per URL
used by a process.
"""


class RegistryCache:
    cache = {}  # key: artifact path (str), value: sha256 (str)

    def _add_to_cache(self, path, sha256):
        self.cache[path] = sha256

    def _del_from_cache(self, path):
        if path in self.cache:
            del self.cache[path]


class Registry(RegistryCache):
    def __init__(self, db_url: str = config_.REGISTRY_URL):
        if db_url.startswith("sqlite:///") and db_url != "sqlite:///:memory:":
            directory = os.path.dirname(db_url[len("sqlite:///"):])
            if directory:
                os.makedirs(directory, exist_ok=True)

        self.engine = create_engine(
            db_url,
            echo=False,
            connect_args={"check_same_thread": False} if db_url.startswith("sqlite") else {}
        )
        self.session = sessionmaker(
            bind=self.engine,
            autocommit=False,
            autoflush=False
        )
        self.__create_tables()
        self.cache = {item.path: item.sha256 for item in self.__select_artifacts()}

    def __create_tables(self):
        Base.metadata.create_all(bind=self.engine)

    def __select_artifacts(self):
        with self.session() as s:
            return s.query(Artifact).all()

    def record_run(self, command: str, output_dir: str, seed: int | None = None) -> int:
        """Add a new run in state 'running' and return its id."""
        with self.session() as s:
            run = Run(command=command, output_dir=output_dir, seed=seed, status="running")
            s.add(run)
            s.commit()
            return run.id

    def finish_run(self, run_id: int, exit_code: int, duration_s: float | None = None) -> None:
        with self.session() as s:
            run = s.get(Run, run_id)
            if run is None:
                return
            run.status = "ok" if exit_code == 0 else "failed"
            run.exit_code = exit_code
            run.duration_s = duration_s
            s.commit()

    def record_artifact(self, run_id: int, path: str, kind: str, sha256: str) -> None:
        """
        Add an artifact row for <run_id>. An existing row for the same path (a --force
        overwrite) is replaced, so every path maps to the hash of its latest content.
        """
        with self.session() as s:
            s.query(Artifact).filter(Artifact.path == path).delete()
            s.add(Artifact(run_id=run_id, path=path, kind=kind, sha256=sha256))
            s.commit()
        self._add_to_cache(path, sha256)

    def delete_artifact(self, path: str) -> None:
        if path not in self.cache:
            return
        with self.session() as s:
            s.query(Artifact).filter(Artifact.path == path).delete()
            s.commit()
        self._del_from_cache(path)

    def artifacts(self, run_id: int) -> list[tuple[str, str, str]]:
        """(path, kind, sha256) of every artifact written by <run_id>, in write order."""
        with self.session() as s:
            rows = s.query(Artifact).filter(Artifact.run_id == run_id).order_by(Artifact.id).all()
            return [(row.path, row.kind, row.sha256) for row in rows]

    def run(self, run_id: int):
        with self.session() as s:
            return s.get(Run, run_id)

    def sha256(self, path: str) -> str | None:
        return self.cache.get(path)


@lru_cache(maxsize=None)
def get_registry(db_url: str | None = None) -> Registry:
    return Registry(db_url or config_.REGISTRY_URL)
