"""Kill -9 a committing process at spread points along the commit timeline
and prove the store always reopens at a committed state."""

import os
import signal
import subprocess
import sys
import textwrap

from docintel.ingest import Chunk
from docintel.store import Store

WORKER = textwrap.dedent("""\
    import os
    import sys
    import time

    # widen the swap window so the parent's kill lands inside commit
    real_rename = os.rename
    def slow_rename(*args, **kwargs):
        time.sleep(0.01)
        return real_rename(*args, **kwargs)
    os.rename = slow_rename

    from docintel.ingest import Chunk
    from docintel.store import Store

    store_dir, trial = sys.argv[1], sys.argv[2]
    store = Store.open(store_dir)
    store.add_chunk(Chunk(
        chunk_id=f"kill{trial}", source_path=f"kill{trial}.txt",
        start_offset=0, end_offset=11, text="kappa omega",
        seq=0, doc_sha256="s"))
    print("READY", flush=True)
    store.commit()
    print("DONE", flush=True)
""")


def run_kill_trials(store_dir, worker_path, trials=20):
    """Returns (reopened_ok, results); results hold (committed, count)."""
    results = []
    ok = 0
    base = Store.open(store_dir)
    count = base.chunk_count
    base.close()
    for trial in range(trials):
        proc = subprocess.Popen(
            [sys.executable, str(worker_path), str(store_dir), str(trial)],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
        assert proc.stdout.readline().strip() == "READY"
        # sweep the kill point across the commit timeline
        delay = 0.006 * trial
        if delay:
            import time
            time.sleep(delay)
        try:
            os.kill(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        out, _ = proc.communicate(timeout=30)
        committed_per_worker = "DONE" in out
        store = Store.open(store_dir)    # recover() runs here
        got = store.chunk_count
        store.close()
        if got not in (count, count + 1):
            results.append(("bad-count", got))
            continue
        if committed_per_worker and got != count + 1:
            # the worker saw commit() return, so the state must be new
            results.append(("done-but-lost", got))
            continue
        count = got
        ok += 1
        results.append(("ok", got))
    return ok, results


def test_sigkill_mid_commit_never_corrupts(tmp_path):
    store = Store.create(tmp_path / "st", kind="dual")
    for i, text in enumerate(["alpha beta", "gamma delta"]):
        store.add_chunk(Chunk(
            chunk_id=f"c{i}", source_path=f"c{i}.txt", start_offset=0,
            end_offset=len(text), text=text, seq=0, doc_sha256="s"))
    store.commit()
    store.close()
    worker = tmp_path / "worker.py"
    worker.write_text(WORKER)
    ok, results = run_kill_trials(tmp_path / "st", worker, trials=20)
    assert ok == 20, f"trial outcomes: {results}"
