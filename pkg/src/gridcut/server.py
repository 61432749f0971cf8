"""HTTP/JSON API around a scenario session.

One session per process; mutating endpoints are serialized through a
non-blocking lock (a concurrent mutation gets 409), readers see the last
published state.  The operator console consumes exactly this surface.
"""

from __future__ import annotations

import threading

from .cascade import find_cascade_triggers
from .errors import GridcutError
from .model import Network
from .orchestrator import ScenarioConfig, Session


def create_app(net: Network, config: ScenarioConfig | None = None):
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import JSONResponse

    app = FastAPI(title="gridcut session", version="0.1.0")
    session = Session(net, config)
    lock = threading.Lock()
    app.state.session = session
    app.state.mutation_lock = lock

    def mutate(fn):
        if not lock.acquire(blocking=False):
            raise HTTPException(status_code=409,
                                detail="another mutation is in progress")
        try:
            return fn()
        except HTTPException:
            raise
        except (GridcutError, ValueError, KeyError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        finally:
            lock.release()

    @app.get("/state")
    def get_state():
        return JSONResponse(session.state_view())

    @app.post("/outage")
    def post_outage(body: dict):
        if "branch" not in body:
            raise HTTPException(status_code=422, detail="missing 'branch'")
        return JSONResponse(mutate(lambda: session.apply_outage(body["branch"])))

    @app.post("/solve")
    def post_solve(body: dict):
        mode = body.get("mode")
        if mode not in ("ica", "rca", "sced", "dcopf"):
            raise HTTPException(status_code=422, detail=f"invalid mode {mode!r}")
        t = body.get("t_solve")

        def run():
            outcome = session.solve_mode(mode, simulated_time=t)
            out = outcome.solution.summary()
            out["refinements"] = outcome.refinements
            return out
        return JSONResponse(mutate(run))

    @app.get("/solutions")
    def get_solutions():
        return JSONResponse({m: o.solution.summary()
                             for m, o in sorted(session.solutions.items())})

    @app.post("/commit")
    def post_commit(body: dict | None = None):
        body = body or {}
        mode = body.get("mode")
        if not body.get("auto") and mode not in ("ica", "rca", "sced", "dcopf"):
            raise HTTPException(status_code=422,
                                detail="specify a mode or auto=true")
        if mode is not None and mode not in session.solutions:
            raise HTTPException(status_code=422, detail=f"mode {mode!r} not solved")

        def run():
            record = session.commit(None if body.get("auto") else mode)
            return record.to_dict()
        return JSONResponse(mutate(run))

    @app.get("/cascade")
    def get_cascade():
        triggers = find_cascade_triggers(session.net)
        return JSONResponse({"triggers": sorted(
            session.net.branches[b].name for b in triggers)})

    @app.post("/reset")
    def post_reset():
        mutate(session.reset)
        return JSONResponse({"ok": True})

    @app.get("/report")
    def get_report():
        return JSONResponse(session.report().to_dict())

    return app


def serve_api(net: Network, port: int = 8000, host: str = "127.0.0.1",
              config: ScenarioConfig | None = None) -> None:
    """Run the session API as a long-running service."""
    import uvicorn
    uvicorn.run(create_app(net, config), host=host, port=port, log_level="info")
