import multiprocessing
from typing import Callable, Sequence


def run_candidates(task: Callable, arguments: Sequence[tuple], workers: int = 1) -> list:
    """
    task(*args) for every tuple in <arguments>, in order. With more than one worker the calls
    run in a spawn-started process pool, so every task and argument must be picklable.
    """
    if workers <= 1 or len(arguments) <= 1:
        return [task(*args) for args in arguments]
    context = multiprocessing.get_context("spawn")
    with context.Pool(processes=min(workers, len(arguments))) as pool:
        return pool.starmap(task, arguments)
