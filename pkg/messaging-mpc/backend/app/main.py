from fastapi import FastAPI
from app.api.routes.mpc import router as mpc_router
from app.config import configure_logging

configure_logging()

app = FastAPI(title="Messaging MPC API")

@app.get("/health")
def health():
    return {"status": "ok"}

app.include_router(mpc_router, prefix="/api/v1")
