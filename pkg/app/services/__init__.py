# Servicios de negocio