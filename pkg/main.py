import os

import uvicorn
from dotenv import load_dotenv
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

import ctapsteer
from ctapsteer.api.simulate import router as simulate_router

load_dotenv()

app = FastAPI(
    title="ctapsteer",
    description="Positive-P CTAP simulations with EPR-steering witnesses and exact small-N checks",
    version=ctapsteer.__version__,
)

# Comma-separated list; "*" admits any browser origin
origins = [o.strip() for o in os.environ.get("CTAPSTEER_CORS_ORIGINS", "*").split(",") if o.strip()]
app.add_middleware(
    CORSMiddleware,
    allow_origins     = origins,
    allow_credentials = True,
    allow_methods     = ["*"],
    allow_headers     = ["*"],
)

app.include_router(simulate_router, prefix="/api/simulate", tags=["simulate"])


@app.get("/")
async def root():
    return {"service": "ctapsteer", "version": ctapsteer.__version__, "status": "running"}


if __name__ == "__main__":
    uvicorn.run(
        "main:app",
        host   = os.environ.get("CTAPSTEER_HOST", "0.0.0.0"),
        port   = int(os.environ.get("CTAPSTEER_PORT", "8000")),
        reload = os.environ.get("CTAPSTEER_RELOAD", "false").lower() == "true",
    )
