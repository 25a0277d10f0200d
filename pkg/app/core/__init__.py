# Módulos core del sistema