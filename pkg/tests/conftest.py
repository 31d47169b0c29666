import os

# pin BLAS threads before numpy is imported anywhere: many small matmuls
for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
