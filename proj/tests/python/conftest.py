import os
import sys

# In-tree runs (ctest) point these at the build output and python package;
# installed-package runs need neither.
for var in ("ISPL_EXT_DIR", "ISPL_PKG_DIR"):
    path = os.environ.get(var)
    if path and path not in sys.path:
        sys.path.insert(0, path)
