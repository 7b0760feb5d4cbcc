from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="DINSYS_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    log_level: str = Field("INFO")

    # inner minimisation of the incremental functional
    inner_tol: float = Field(1e-10, gt=0)
    inner_max_iters: int = Field(100, ge=1)

    # conjugates, splits and infimal convolutions
    conjugate_tol: float = Field(1e-10, gt=0)
    conjugate_max_iters: int = Field(200, ge=1)
    unbounded_threshold: float = Field(1e8, gt=0)

    edi_tol: float = Field(1e-8, gt=0)

    # 0 means available parallelism
    jobs: int = Field(0, ge=0)
    progress: bool = Field(False)


settings = Settings()
