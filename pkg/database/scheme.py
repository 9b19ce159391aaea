from sqlalchemy import Column, DateTime, Float, ForeignKey, INT, String, func
from sqlalchemy.orm import declarative_base


Base = declarative_base()


class Run(Base):

    __tablename__ = 'runs'

    id = Column(INT, primary_key=True, autoincrement=True)
    command = Column(String(64), nullable=False)
    output_dir = Column(String(1024), nullable=False)
    seed = Column(INT, nullable=True)
    status = Column(String(16), nullable=False, default="running")  # running / ok / failed
    exit_code = Column(INT, nullable=True)
    started_at = Column(DateTime, server_default=func.now())
    duration_s = Column(Float, nullable=True)


class Artifact(Base):

    __tablename__ = 'artifacts'

    id = Column(INT, primary_key=True, autoincrement=True)
    run_id = Column(INT, ForeignKey('runs.id'), nullable=False)
    path = Column(String(1024), nullable=False)
    kind = Column(String(32), nullable=False)
    sha256 = Column(String(64), nullable=False)
