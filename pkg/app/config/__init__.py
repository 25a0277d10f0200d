# Módulo de configuración