# Init for ctapsteer.simulation package
